use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{DatasetError, Label, VideoEntry};
use crate::image::RgbImage;

/// Decoded frames of one video. Frames are shared so sequences can be handed
/// to concurrent workers without copying pixel data.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    id: String,
    label: Label,
    frames: Arc<[RgbImage]>,
}

impl FrameSequence {
    pub fn new(
        id: impl Into<String>,
        label: Label,
        frames: Vec<RgbImage>,
    ) -> Result<Self, DatasetError> {
        let id = id.into();
        let first = frames
            .first()
            .ok_or_else(|| DatasetError::EmptySequence(PathBuf::from(&id)))?;
        let expected = (first.width(), first.height());
        for (i, f) in frames.iter().enumerate() {
            if (f.width(), f.height()) != expected {
                return Err(DatasetError::InconsistentDimensions {
                    path: PathBuf::from(format!("{id}[{i}]")),
                    expected,
                    found: (f.width(), f.height()),
                });
            }
        }
        Ok(Self {
            id,
            label,
            frames: frames.into(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn frames(&self) -> &[RgbImage] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// (width, height) shared by every frame.
    pub fn dimensions(&self) -> (usize, usize) {
        (self.frames[0].width(), self.frames[0].height())
    }
}

/// PNG files of `dir` in lexicographic filename order.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    if !dir.is_dir() {
        return Err(DatasetError::MissingFile(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| DatasetError::io(dir, e))? {
        let path = entry.map_err(|e| DatasetError::io(dir, e))?.path();
        let is_png = path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Indices kept when at most `max_frames` of `n` frames are used: all of them
/// when `n <= max_frames`, otherwise a uniform stride over the sequence.
pub fn sample_indices(n: usize, max_frames: usize) -> Vec<usize> {
    if n <= max_frames || max_frames == 0 {
        return (0..n).collect();
    }
    (0..max_frames).map(|i| i * n / max_frames).collect()
}

pub fn load_frames(entry: &VideoEntry) -> Result<FrameSequence, DatasetError> {
    load_frames_sampled(entry, usize::MAX)
}

/// Loads frames of `entry` in filename order, keeping at most `max_frames`
/// by uniform stride sampling.
pub fn load_frames_sampled(
    entry: &VideoEntry,
    max_frames: usize,
) -> Result<FrameSequence, DatasetError> {
    let files = list_frame_files(&entry.frame_dir)?;
    if files.is_empty() {
        return Err(DatasetError::EmptySequence(entry.frame_dir.clone()));
    }
    let mut frames: Vec<RgbImage> = Vec::new();
    for idx in sample_indices(files.len(), max_frames) {
        let img = read_png(&files[idx])?;
        if let Some(first) = frames.first() {
            if (first.width(), first.height()) != (img.width(), img.height()) {
                return Err(DatasetError::InconsistentDimensions {
                    path: files[idx].clone(),
                    expected: (first.width(), first.height()),
                    found: (img.width(), img.height()),
                });
            }
        }
        frames.push(img);
    }
    FrameSequence::new(entry.id.clone(), entry.label, frames)
}

/// Decodes a PNG into 8-bit RGB, expanding palette/gray and dropping alpha.
pub fn read_png(path: &Path) -> Result<RgbImage, DatasetError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DatasetError::MissingFile(path.to_path_buf()),
        _ => DatasetError::io(path, e),
    })?;
    let decode_err = |e: png::DecodingError| DatasetError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(decode_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| DatasetError::Decode {
        path: path.to_path_buf(),
        message: "image too large".into(),
    })?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(decode_err)?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => buf
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => {
            buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect()
        }
        png::ColorType::Indexed => {
            return Err(DatasetError::Decode {
                path: path.to_path_buf(),
                message: "palette image was not expanded".into(),
            })
        }
    };
    Ok(RgbImage::new(w, h, rgb))
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        img.width() as u32,
        img.height() as u32,
    );
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let encode_err = |e: png::EncodingError| DatasetError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = encoder.write_header().map_err(encode_err)?;
    writer.write_image_data(img.as_bytes()).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}
