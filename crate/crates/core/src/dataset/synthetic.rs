//! Procedural "modular" characters: every sprite is assembled from a body,
//! head, hair, and clothes variant plus a palette, drawn per pose. Many
//! characters share part shapes and differ only in color, which is exactly
//! the structure a translator can learn part by part.

use image::{Rgba, RgbaImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{normalize, CharacterRecord, Pose, Sprite, CANVAS};
use crate::error::{Error, Result};

type Rgb = [u8; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BodyVariant {
    pub torso_width: i32,
    pub torso_height: i32,
    pub leg_length: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadVariant {
    pub width: i32,
    pub height: i32,
    pub rounded: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HairVariant {
    Short,
    Long,
    Spiky,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClothesVariant {
    Shirt,
    Vest,
    Robe,
}

/// Part shapes and palettes characters are assembled from.
#[derive(Clone, Debug, PartialEq)]
pub struct PartLibrary {
    pub bodies: Vec<BodyVariant>,
    pub heads: Vec<HeadVariant>,
    pub hair: Vec<HairVariant>,
    pub clothes: Vec<ClothesVariant>,
    pub skin_tones: Vec<Rgb>,
    pub hair_colors: Vec<Rgb>,
    pub cloth_colors: Vec<Rgb>,
    pub pants_colors: Vec<Rgb>,
}

impl Default for PartLibrary {
    fn default() -> Self {
        Self {
            bodies: vec![
                BodyVariant { torso_width: 10, torso_height: 12, leg_length: 9 },
                BodyVariant { torso_width: 14, torso_height: 13, leg_length: 8 },
            ],
            heads: vec![
                HeadVariant { width: 12, height: 11, rounded: true },
                HeadVariant { width: 12, height: 12, rounded: false },
            ],
            hair: vec![HairVariant::Short, HairVariant::Long, HairVariant::Spiky],
            clothes: vec![ClothesVariant::Shirt, ClothesVariant::Vest, ClothesVariant::Robe],
            skin_tones: vec![[255, 206, 160], [224, 172, 105], [141, 85, 36]],
            hair_colors: vec![[44, 34, 30], [120, 72, 30], [230, 200, 80], [200, 60, 30], [220, 220, 230]],
            cloth_colors: vec![
                [200, 40, 40],
                [40, 80, 200],
                [40, 160, 70],
                [130, 50, 170],
                [230, 130, 30],
                [30, 150, 150],
            ],
            pants_colors: vec![[60, 60, 90], [90, 60, 40], [45, 45, 45], [100, 100, 110]],
        }
    }
}

impl PartLibrary {
    pub fn validate(&self) -> Result<()> {
        let parts = [
            ("body", self.bodies.len()),
            ("head", self.heads.len()),
            ("hair", self.hair.len()),
            ("clothes", self.clothes.len()),
        ];
        for (name, n) in parts {
            if n < 2 {
                return Err(Error::Config(format!("part library needs at least 2 {name} variants, has {n}")));
            }
        }
        let palettes = [
            ("skin", self.skin_tones.len()),
            ("hair color", self.hair_colors.len()),
            ("cloth color", self.cloth_colors.len()),
            ("pants color", self.pants_colors.len()),
        ];
        for (name, n) in palettes {
            if n == 0 {
                return Err(Error::Config(format!("part library has no {name} entries")));
            }
        }
        Ok(())
    }
}

/// One character's concrete choice of parts and colors.
#[derive(Clone, Copy, Debug)]
struct Character {
    body: BodyVariant,
    head: HeadVariant,
    hair: HairVariant,
    clothes: ClothesVariant,
    skin: Rgb,
    hair_color: Rgb,
    cloth: Rgb,
    pants: Rgb,
}

impl Character {
    fn sample(lib: &PartLibrary, rng: &mut ChaCha8Rng) -> Self {
        fn pick<T: Copy>(v: &[T], rng: &mut ChaCha8Rng) -> T {
            v[rng.random_range(0..v.len())]
        }
        Self {
            body: pick(&lib.bodies, rng),
            head: pick(&lib.heads, rng),
            hair: pick(&lib.hair, rng),
            clothes: pick(&lib.clothes, rng),
            skin: pick(&lib.skin_tones, rng),
            hair_color: pick(&lib.hair_colors, rng),
            cloth: pick(&lib.cloth_colors, rng),
            pants: pick(&lib.pants_colors, rng),
        }
    }
}

const OUTLINE: Rgb = [24, 20, 30];
const EYE: Rgb = [30, 30, 44];
const SHOES: Rgb = [50, 36, 26];
const HEAD_TOP: i32 = 14;
const CENTER: i32 = CANVAS as i32 / 2;

fn shade(c: Rgb, f: f32) -> Rgb {
    c.map(|v| (v as f32 * f).round().clamp(0.0, 255.0) as u8)
}

fn lighten(c: Rgb) -> Rgb {
    c.map(|v| v + (255 - v) / 2)
}

struct Canvas {
    px: Vec<Option<Rgb>>,
}

impl Canvas {
    const N: i32 = CANVAS as i32;

    fn new() -> Self {
        Self {
            px: vec![None; (Self::N * Self::N) as usize],
        }
    }

    fn put(&mut self, x: i32, y: i32, c: Rgb) {
        if (0..Self::N).contains(&x) && (0..Self::N).contains(&y) {
            self.px[(y * Self::N + x) as usize] = Some(c);
        }
    }

    fn rect(&mut self, x0: i32, y0: i32, w: i32, h: i32, c: Rgb) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                self.put(x, y, c);
            }
        }
    }

    fn clear(&mut self, x: i32, y: i32) {
        if (0..Self::N).contains(&x) && (0..Self::N).contains(&y) {
            self.px[(y * Self::N + x) as usize] = None;
        }
    }

    fn outline(&mut self) {
        let opaque = self.px.iter().map(Option::is_some).collect::<Vec<_>>();
        let n = Self::N;
        for y in 0..n {
            for x in 0..n {
                if opaque[(y * n + x) as usize] {
                    continue;
                }
                let touches = [(0, -1), (0, 1), (-1, 0), (1, 0)].iter().any(|(dx, dy)| {
                    let (nx, ny) = (x + dx, y + dy);
                    (0..n).contains(&nx) && (0..n).contains(&ny) && opaque[(ny * n + nx) as usize]
                });
                if touches {
                    self.put(x, y, OUTLINE);
                }
            }
        }
    }

    fn into_image(self, mirrored: bool) -> RgbaImage {
        let n = Self::N;
        RgbaImage::from_fn(CANVAS, CANVAS, |x, y| {
            let sx = if mirrored { n - 1 - x as i32 } else { x as i32 };
            match self.px[(y as i32 * n + sx) as usize] {
                Some([r, g, b]) => Rgba([r, g, b, 255]),
                None => Rgba([0, 0, 0, 0]),
            }
        })
    }
}

fn draw(ch: &Character, pose: Pose) -> RgbaImage {
    let mut cv = Canvas::new();
    // Left is the mirror image of right.
    let (view, mirrored) = match pose {
        Pose::Left => (Pose::Right, true),
        p => (p, false),
    };
    let side = view == Pose::Right;
    let b = ch.body;
    let h = ch.head;
    let torso_top = HEAD_TOP + h.height;
    let legs_top = torso_top + b.torso_height;
    let feet = legs_top + b.leg_length - 2;

    // Legs and shoes.
    if side {
        cv.rect(CENTER - 3, legs_top, 3, b.leg_length, shade(ch.pants, 0.75));
        cv.rect(CENTER, legs_top, 3, b.leg_length / 2, ch.pants);
        cv.rect(CENTER + 1, legs_top + b.leg_length / 2, 3, b.leg_length - b.leg_length / 2, ch.pants);
        cv.rect(CENTER - 3, feet, 4, 2, SHOES);
        cv.rect(CENTER + 1, feet, 5, 2, SHOES);
    } else {
        let lw = b.torso_width / 2 - 1;
        cv.rect(CENTER - 1 - lw, legs_top, lw, b.leg_length, ch.pants);
        cv.rect(CENTER + 1, legs_top, lw, b.leg_length, ch.pants);
        cv.rect(CENTER - 1 - lw, feet, lw, 2, SHOES);
        cv.rect(CENTER + 1, feet, lw, 2, SHOES);
    }

    // Torso and clothes.
    let tw = if side { (b.torso_width * 3 / 5).max(6) } else { b.torso_width };
    let x0 = CENTER - tw / 2;
    cv.rect(x0, torso_top, tw, b.torso_height, ch.cloth);
    match ch.clothes {
        ClothesVariant::Shirt => cv.rect(x0, legs_top - 2, tw, 1, shade(ch.pants, 0.6)),
        ClothesVariant::Vest => match view {
            Pose::Front => cv.rect(CENTER - 1, torso_top, 2, b.torso_height, lighten(ch.cloth)),
            Pose::Right => cv.rect(x0 + tw - 2, torso_top, 2, b.torso_height, lighten(ch.cloth)),
            _ => {}
        },
        ClothesVariant::Robe => {
            for (i, y) in (legs_top..feet).enumerate() {
                let grow = i as i32 / 3;
                cv.rect(x0 - grow, y, tw + 2 * grow, 1, ch.cloth);
            }
        }
    }

    // Arms: sleeves in a darker shade, hands in skin.
    let arm_h = b.torso_height - 1;
    let sleeve = shade(ch.cloth, 0.7);
    if side {
        cv.rect(CENTER - 1, torso_top + 1, 3, arm_h - 2, sleeve);
        cv.rect(CENTER - 1, torso_top + arm_h - 1, 3, 2, ch.skin);
    } else {
        for ax in [x0 - 3, x0 + tw] {
            cv.rect(ax, torso_top + 1, 3, arm_h - 2, sleeve);
            cv.rect(ax, torso_top + arm_h - 1, 3, 2, ch.skin);
        }
    }

    // Head.
    let hw = if side { h.width - 2 } else { h.width };
    let hx = CENTER - hw / 2 + i32::from(side);
    cv.rect(hx, HEAD_TOP, hw, h.height, ch.skin);
    if h.rounded {
        for (x, y) in [(hx, HEAD_TOP), (hx + hw - 1, HEAD_TOP), (hx, HEAD_TOP + h.height - 1), (hx + hw - 1, HEAD_TOP + h.height - 1)] {
            cv.clear(x, y);
        }
    }
    let eye_y = HEAD_TOP + h.height * 11 / 20;
    match view {
        Pose::Front => {
            cv.rect(CENTER - 4, eye_y, 2, 2, EYE);
            cv.rect(CENTER + 2, eye_y, 2, 2, EYE);
        }
        Pose::Right => {
            cv.rect(hx + hw - 4, eye_y, 2, 2, EYE);
            cv.put(hx + hw, eye_y + 2, ch.skin);
        }
        _ => {}
    }

    // Hair.
    let hc = ch.hair_color;
    let cap_h = 4;
    cv.rect(hx - 1, HEAD_TOP - 1, hw + 2, cap_h, hc);
    match view {
        Pose::Back => cv.rect(hx - 1, HEAD_TOP, hw + 2, h.height - 2, hc),
        Pose::Right => cv.rect(hx - 1, HEAD_TOP, 4, h.height * 2 / 3, hc),
        _ => {}
    }
    match ch.hair {
        HairVariant::Short => {}
        HairVariant::Long => {
            let len = h.height + 3;
            match view {
                Pose::Right => cv.rect(hx - 2, HEAD_TOP, 5, len, hc),
                _ => {
                    cv.rect(hx - 2, HEAD_TOP, 3, len, hc);
                    cv.rect(hx + hw - 1, HEAD_TOP, 3, len, hc);
                    if view == Pose::Back {
                        cv.rect(hx - 1, HEAD_TOP, hw + 2, len, hc);
                    }
                }
            }
        }
        HairVariant::Spiky => {
            let step = if side { -3 } else { 3 };
            let mut x = if side { hx + hw - 2 } else { hx };
            for _ in 0..(hw + 2) / 3 {
                cv.rect(x, HEAD_TOP - 3, 2, 2, hc);
                x += step;
            }
        }
    }

    cv.outline();
    cv.into_image(mirrored)
}

/// Generates `n_characters` characters, each with one frame in all four
/// poses. Parts and palette depend only on `(seed, index)`.
pub fn generate_synthetic_dataset(seed: u64, n_characters: usize, library: &PartLibrary) -> Result<Vec<CharacterRecord>> {
    library.validate()?;
    (0..n_characters)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let ch = Character::sample(library, &mut rng);
            let id = format!("synth-{i:04}");
            let mut record = CharacterRecord::new(id.clone());
            for pose in Pose::ALL {
                record.insert(Sprite::new(normalize(&draw(&ch, pose))?, pose, id.clone(), 0)?)?;
            }
            Ok(record)
        })
        .collect()
}
