//! Receptive-field arithmetic for stacks of convolutions.

use super::spec::BlockSpec;

/// Size of the input window seen by one output unit, and the input-pixel
/// distance between neighbouring output units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReceptiveField {
    pub size: usize,
    pub jump: usize,
}

/// Applies `rf += (k - 1) * jump; jump *= s` over the stack, starting from a single pixel.
pub fn receptive_field(stack: &[BlockSpec]) -> ReceptiveField {
    stack.iter().fold(ReceptiveField { size: 1, jump: 1 }, |rf, b| ReceptiveField {
        size: rf.size + (b.kernel - 1) * rf.jump,
        jump: rf.jump * b.stride,
    })
}

/// Offset (in input pixels) of the top-left corner of output unit `i`'s window,
/// which may be negative when the stack pads.
pub fn window_start(stack: &[BlockSpec], i: usize) -> isize {
    let mut start = 0isize;
    let mut jump = 1isize;
    for b in stack {
        start -= b.padding as isize * jump;
        jump *= b.stride as isize;
    }
    start + i as isize * jump
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::ActivationKind;

    fn conv(k: usize, s: usize) -> BlockSpec {
        BlockSpec::valid_conv(1, k, s, false, ActivationKind::None)
    }

    #[test]
    fn recurrence_examples() {
        assert_eq!(receptive_field(&[]), ReceptiveField { size: 1, jump: 1 });
        assert_eq!(receptive_field(&[conv(4, 2)]), ReceptiveField { size: 4, jump: 2 });
        assert_eq!(receptive_field(&[conv(4, 2), conv(4, 2), conv(4, 2)]).size, 22);
        assert_eq!(receptive_field(&[conv(2, 1)]).size, 2);
        assert_eq!(receptive_field(&[conv(4, 1), conv(2, 1)]).size, 5);
        assert_eq!(receptive_field(&[conv(3, 2), conv(4, 1), conv(2, 1)]).size, 11);
        assert_eq!(receptive_field(&vec![conv(2, 2); 6]).size, 64);
    }

    #[test]
    fn window_start_tracks_padding_and_stride() {
        assert_eq!(window_start(&[conv(3, 2), conv(4, 1)], 5), 10);
        let padded = vec![BlockSpec::down(8, false); 2];
        assert_eq!(window_start(&padded, 0), -3);
    }
}
