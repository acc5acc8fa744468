//! On-disk formats: dataset descriptors (TOML), the canonical dataset
//! directory (`<character>/<pose>_<frame>.png`), and its JSONL manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use super::imaging::{pad_to_canvas, slice_sheet, synthesize_alpha, GridLayout, RawSheet, SheetPixels, CANVAS};
use super::{normalize, CharacterRecord, Pose, Sprite};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceLayout {
    /// One sheet per character, poses by row and frames by column.
    Sheets,
    /// `<root>/<character>/<pose>_<frame>.png`.
    Directory,
}

fn default_root() -> PathBuf {
    PathBuf::from(".")
}

fn default_pose_order() -> Vec<Pose> {
    Pose::ALL.to_vec()
}

/// Describes how to read one source collection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDescriptor {
    pub name: String,
    pub layout: SourceLayout,
    /// Relative paths resolve against the descriptor's directory.
    #[serde(default = "default_root")]
    pub root: PathBuf,
    /// Sheet files to read; empty means every `*.png` under `root`.
    #[serde(default)]
    pub files: Vec<PathBuf>,
    #[serde(default)]
    pub cell_width: u32,
    #[serde(default)]
    pub cell_height: u32,
    #[serde(default)]
    pub rows: u32,
    #[serde(default)]
    pub columns: u32,
    #[serde(default = "default_pose_order")]
    pub pose_order: Vec<Pose>,
    /// Background color to make transparent; mandatory for RGB sources.
    pub key_color: Option<[u8; 3]>,
}

impl DatasetDescriptor {
    pub fn grid(&self) -> GridLayout {
        GridLayout {
            cell_width: self.cell_width,
            cell_height: self.cell_height,
            rows: self.rows,
            columns: self.columns,
            pose_order: self.pose_order.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("descriptor field `name` is empty".into()));
        }
        if self.layout == SourceLayout::Sheets {
            for (field, v) in [
                ("cell_width", self.cell_width),
                ("cell_height", self.cell_height),
                ("rows", self.rows),
                ("columns", self.columns),
            ] {
                if v == 0 {
                    return Err(Error::Config(format!(
                        "descriptor field `{field}` must be a positive integer for sheet sources"
                    )));
                }
            }
            self.grid().validate()?;
        }
        Ok(())
    }
}

/// Parses descriptor text; `origin` is only used in messages.
pub fn parse_descriptor(text: &str, origin: &Path) -> Result<DatasetDescriptor> {
    let d: DatasetDescriptor =
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", origin.display())))?;
    d.validate()
        .map_err(|e| Error::Config(format!("{}: {e}", origin.display())))?;
    Ok(d)
}

pub fn load_descriptor(path: &Path) -> Result<DatasetDescriptor> {
    let text = fs::read_to_string(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => Error::Missing(path.to_path_buf()),
        _ => Error::Io { path: path.to_path_buf(), source },
    })?;
    parse_descriptor(&text, path)
}

/// One line of `manifest.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub character_id: String,
    pub pose: Pose,
    pub frame: usize,
    /// Relative to the dataset directory.
    pub path: PathBuf,
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrepareSummary {
    pub characters: usize,
    pub sprites: usize,
    pub manifest: PathBuf,
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => Error::Missing(path.to_path_buf()),
        source => Error::Image { path: path.to_path_buf(), source },
    })
}

fn sheet_pixels(img: DynamicImage) -> SheetPixels {
    if img.color().has_alpha() {
        SheetPixels::Rgba(img.to_rgba8())
    } else {
        SheetPixels::Rgb(img.to_rgb8())
    }
}

fn pngs_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => Error::Missing(dir.to_path_buf()),
        _ => Error::Io { path: dir.to_path_buf(), source },
    })?;
    let mut out = Vec::new();
    for entry in rd {
        let path = entry.map_err(Error::io(dir))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn read_sheets(d: &DatasetDescriptor, root: &Path) -> Result<Vec<CharacterRecord>> {
    let files = if d.files.is_empty() {
        pngs_in(root)?
    } else {
        let files: Vec<PathBuf> = d.files.iter().map(|f| root.join(f)).collect();
        let missing: Vec<PathBuf> = files.iter().filter(|f| !f.is_file()).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::MissingFiles(missing));
        }
        files
    };
    let mut records = Vec::with_capacity(files.len());
    for file in files {
        let sheet = RawSheet {
            pixels: sheet_pixels(open_image(&file)?),
            layout: d.grid(),
            key_color: d.key_color,
        };
        let id = stem(&file);
        let cells = slice_sheet(&sheet).map_err(|e| match e {
            Error::Invalid(m) | Error::Config(m) => Error::Invalid(format!("{}: {m}", file.display())),
            e => e,
        })?;
        let mut record = CharacterRecord::new(id.clone());
        for cell in cells {
            let canvas = pad_to_canvas(&cell.pixels, CANVAS)?;
            record.insert(Sprite::new(normalize(&canvas)?, cell.pose, id.clone(), cell.frame_index)?)?;
        }
        records.push(record);
    }
    Ok(records)
}

/// Splits `front_2` into (Front, 2).
fn parse_sprite_name(name: &str) -> Option<(Pose, usize)> {
    let (pose, frame) = name.rsplit_once('_')?;
    Some((pose.parse().ok()?, frame.parse().ok()?))
}

fn read_directory(d: &DatasetDescriptor, root: &Path) -> Result<Vec<CharacterRecord>> {
    let rd = fs::read_dir(root).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => Error::Missing(root.to_path_buf()),
        _ => Error::Io { path: root.to_path_buf(), source },
    })?;
    let mut dirs = Vec::new();
    for entry in rd {
        let path = entry.map_err(Error::io(root))?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    let mut records = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let id = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut record = CharacterRecord::new(id.clone());
        for file in pngs_in(&dir)? {
            let Some((pose, frame)) = parse_sprite_name(&stem(&file)) else {
                log::warn!("ignoring {}: not named <pose>_<frame>.png", file.display());
                continue;
            };
            let rgba = match sheet_pixels(open_image(&file)?) {
                SheetPixels::Rgba(img) => match d.key_color {
                    Some(k) => {
                        let mut img = img;
                        img.pixels_mut().filter(|p| p.0[..3] == k).for_each(|p| p.0[3] = 0);
                        img
                    }
                    None => img,
                },
                SheetPixels::Rgb(img) => {
                    let key = d.key_color.ok_or_else(|| {
                        Error::Config(format!(
                            "{} has no alpha channel and the descriptor declares no key_color",
                            file.display()
                        ))
                    })?;
                    synthesize_alpha(&img, key)
                }
            };
            let canvas = pad_to_canvas(&rgba, CANVAS)
                .map_err(|e| Error::Invalid(format!("{}: {e}", file.display())))?;
            record.insert(Sprite::new(normalize(&canvas)?, pose, id.clone(), frame)?)?;
        }
        if record.sprite_count() > 0 {
            records.push(record);
        }
    }
    Ok(records)
}

/// Reads the sources a descriptor points at into canonical records.
pub fn read_source(descriptor: &DatasetDescriptor, descriptor_dir: &Path) -> Result<Vec<CharacterRecord>> {
    let root = descriptor_dir.join(&descriptor.root);
    match descriptor.layout {
        SourceLayout::Sheets => read_sheets(descriptor, &root),
        SourceLayout::Directory => read_directory(descriptor, &root),
    }
}

/// Ingests the collection a descriptor describes into a canonical dataset
/// directory at `out`.
pub fn prepare_dataset(descriptor_path: &Path, out: &Path) -> Result<PrepareSummary> {
    let d = load_descriptor(descriptor_path)?;
    let dir = descriptor_path.parent().unwrap_or(Path::new("."));
    let records = read_source(&d, dir)?;
    write_canonical(&records, out, &d.name)
}

/// Writes records as 64x64 RGBA PNGs plus a manifest.
pub fn write_canonical(records: &[CharacterRecord], out: &Path, source: &str) -> Result<PrepareSummary> {
    fs::create_dir_all(out).map_err(Error::io(out))?;
    let manifest = out.join(MANIFEST_FILE);
    let file = fs::File::create(&manifest).map_err(Error::io(&manifest))?;
    let mut w = BufWriter::new(file);
    let mut sprites = 0;
    for record in records {
        let cdir = out.join(&record.character_id);
        fs::create_dir_all(&cdir).map_err(Error::io(&cdir))?;
        for (pose, frames) in &record.sprites {
            for s in frames {
                let rel = PathBuf::from(&record.character_id).join(format!("{pose}_{}.png", s.frame_index));
                let path = out.join(&rel);
                super::denormalize(s.pixels())?
                    .save(&path)
                    .map_err(|source| Error::Image { path: path.clone(), source })?;
                let row = ManifestRow {
                    character_id: record.character_id.clone(),
                    pose: *pose,
                    frame: s.frame_index,
                    path: rel,
                    source: source.to_string(),
                };
                let line = serde_json::to_string(&row).map_err(|source| Error::Json { path: manifest.clone(), source })?;
                writeln!(w, "{line}").map_err(Error::io(&manifest))?;
                sprites += 1;
            }
        }
    }
    w.flush().map_err(Error::io(&manifest))?;
    Ok(PrepareSummary {
        characters: records.len(),
        sprites,
        manifest,
    })
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>> {
    let path = dir.join(MANIFEST_FILE);
    let file = fs::File::open(&path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => Error::Missing(path.clone()),
        _ => Error::Io { path: path.clone(), source },
    })?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Error::io(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| Error::Invalid(format!("{} line {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Loads a canonical dataset directory written by [`write_canonical`].
pub fn load_canonical(dir: &Path) -> Result<Vec<CharacterRecord>> {
    let rows = read_manifest(dir)?;
    let missing: Vec<PathBuf> = rows.iter().map(|r| dir.join(&r.path)).filter(|p| !p.is_file()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    let mut records: BTreeMap<String, CharacterRecord> = BTreeMap::new();
    for row in rows {
        let path = dir.join(&row.path);
        let img = open_image(&path)?.to_rgba8();
        let t = normalize(&img).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        records
            .entry(row.character_id.clone())
            .or_insert_with(|| CharacterRecord::new(row.character_id.clone()))
            .insert(Sprite::new(t, row.pose, row.character_id, row.frame)?)?;
    }
    Ok(records.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_errors_name_the_problem() {
        let p = Path::new("d.toml");
        let err = parse_descriptor("name = \"x\"\nlayout = \"sheets\"\ncell_width = 0\ncell_height = 32\nrows = 4\ncolumns = 3\n", p)
            .unwrap_err();
        assert!(err.to_string().contains("cell_width"), "{err}");
        let err = parse_descriptor("name = \"x\"\nlayout = \"grid\"\n", p).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_descriptor("name = \"x\"\nlayout = \"directory\"\ncolour = 1\n", p).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn sprite_names() {
        assert_eq!(parse_sprite_name("front_2"), Some((Pose::Front, 2)));
        assert_eq!(parse_sprite_name("walk_left_0"), None);
        assert_eq!(parse_sprite_name("left"), None);
    }
}
