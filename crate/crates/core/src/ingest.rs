//! Matrix files, image patches and label-imbalanced client splits.
//!
//! # Binary matrix format
//!
//! | bytes | content |
//! |-------|---------|
//! | 0..4 | magic `PDLM` |
//! | 4..8 | version, `u32` little-endian, currently 1 |
//! | 8..16 | rows, `u64` little-endian |
//! | 16..24 | cols, `u64` little-endian |
//! | 24.. | `rows * cols` little-endian `f64`, row-major |
//!
//! # CSV matrix format
//!
//! The first line holds the dimensions as `rows,cols`; each following line is
//! one matrix row. Values are written in shortest round-trip form.
//!
//! Files ending in `.csv` use the CSV format; everything else is binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{self, streams};

pub const MAGIC: &[u8; 4] = b"PDLM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

impl MatrixFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn encode_binary(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

/// Parses the binary format. `path` only labels errors.
pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<DMatrix<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(
            path,
            format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len()),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(format_err(path, "byte 0: missing PDLM magic"));
    }
    let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(format_err(
            path,
            format!("byte 4: unsupported version {version} (expected {VERSION})"),
        ));
    }
    let (rows, cols) = (u64_at(8), u64_at(16));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| format_err(path, format!("byte 8: dimensions {rows}x{cols} overflow")))?;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if actual != expected {
        return Err(format_err(
            path,
            format!("byte {HEADER_LEN}: payload of {rows}x{cols} needs {expected} bytes, found {actual}"),
        ));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let mut m = DMatrix::zeros(rows, cols);
    for k in 0..rows * cols {
        let at = HEADER_LEN + 8 * k;
        let v = f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(format_err(path, format!("byte {at}: non-finite entry {v}")));
        }
        m[(k / cols, k % cols)] = v;
    }
    Ok(m)
}

pub fn encode_csv(m: &DMatrix<f64>) -> String {
    let mut out = format!("{},{}\n", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses the CSV format. `path` only labels errors.
pub fn decode_csv(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| format_err(path, "line 1: missing rows,cols header"))?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    let parse_dim = |s: &str| s.parse::<usize>().ok();
    let (rows, cols) = match dims.as_slice() {
        [r, c] => match (parse_dim(r), parse_dim(c)) {
            (Some(r), Some(c)) => (r, c),
            _ => return Err(format_err(path, format!("line 1: bad header {header:?}"))),
        },
        _ => return Err(format_err(path, format!("line 1: bad header {header:?}"))),
    };
    let mut m = DMatrix::zeros(rows, cols);
    let mut seen = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if seen == rows {
            return Err(format_err(
                path,
                format!("line {lineno}: more than {rows} data rows"),
            ));
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols {
            return Err(format_err(
                path,
                format!(
                    "line {lineno}: expected {cols} values, found {}",
                    cells.len()
                ),
            ));
        }
        for (j, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| format_err(path, format!("line {lineno}: bad number {cell:?}")))?;
            if !v.is_finite() {
                return Err(format_err(
                    path,
                    format!("line {lineno}: non-finite entry {v}"),
                ));
            }
            m[(seen, j)] = v;
        }
        seen += 1;
    }
    if seen != rows {
        return Err(format_err(
            path,
            format!("expected {rows} data rows, found {seen}"),
        ));
    }
    Ok(m)
}

pub fn write_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let bytes = match MatrixFormat::from_path(path) {
        MatrixFormat::Binary => encode_binary(m),
        MatrixFormat::Csv => encode_csv(m).into_bytes(),
    };
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    match MatrixFormat::from_path(path) {
        MatrixFormat::Binary => decode_binary(&bytes, path),
        MatrixFormat::Csv => {
            let text = std::str::from_utf8(&bytes).map_err(|e| {
                format_err(path, format!("byte {}: invalid UTF-8", e.valid_up_to()))
            })?;
            decode_csv(text, path)
        }
    }
}

/// An image with `channels` interleaved values per pixel, stored row-major:
/// the value of channel `c` at `(y, x)` is at `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidConfig(format!(
                "frame dimensions {height}x{width}x{channels} must be positive"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::mismatch(
                "frame data length",
                height * width * channels,
                data.len(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "frame" });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![0.0; height * width * channels],
        )
    }

    /// A frame from an `height x (width * channels)` matrix laid out like the
    /// interleaved storage.
    pub fn from_matrix(m: &DMatrix<f64>, channels: usize) -> Result<Self> {
        if channels == 0 || !m.ncols().is_multiple_of(channels) {
            return Err(Error::InvalidConfig(format!(
                "{} columns do not split into {channels} channels",
                m.ncols()
            )));
        }
        let data = m.transpose().as_slice().to_vec();
        Self::new(m.nrows(), m.ncols() / channels, channels, data)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.height, self.width * self.channels, &self.data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    /// Channels are averaged into one value per pixel.
    Grayscale,
    /// Each channel's patch is vectorised separately and the blocks are stacked.
    PerChannel,
}

/// Patch extraction settings.
///
/// A patch becomes one column. Within a channel, pixels are taken row by row;
/// with [`ChannelMode::PerChannel`] the channel blocks follow each other, so
/// the entry for `(py, px, c)` sits at `c * ph * pw + py * pw + px`. Patches
/// are taken at offsets `0, stride, 2 * stride, ...` that fit in the frame,
/// and columns follow the patch grid row by row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchConfig {
    pub patch_height: usize,
    pub patch_width: usize,
    pub stride_y: usize,
    pub stride_x: usize,
    pub channels: ChannelMode,
}

impl PatchConfig {
    /// Non-overlapping `h x w` patches.
    pub fn tiles(h: usize, w: usize, channels: ChannelMode) -> Self {
        Self {
            patch_height: h,
            patch_width: w,
            stride_y: h,
            stride_x: w,
            channels,
        }
    }

    /// 12x16 colour tiles: a 480x640x3 frame gives a 40x40 grid, i.e. 1600
    /// columns of length 576.
    pub fn video() -> Self {
        Self::tiles(12, 16, ChannelMode::PerChannel)
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.patch_height == 0 || self.patch_width == 0 {
            return Err(Error::InvalidConfig(
                "patch dimensions must be positive".into(),
            ));
        }
        if self.stride_y == 0 || self.stride_x == 0 {
            return Err(Error::InvalidConfig(
                "patch strides must be at least 1".into(),
            ));
        }
        if self.patch_height > height || self.patch_width > width {
            return Err(Error::InvalidConfig(format!(
                "patch {}x{} does not fit in a {height}x{width} frame",
                self.patch_height, self.patch_width
            )));
        }
        Ok(())
    }

    /// Length of one patch column for frames with `channels` channels.
    pub fn patch_len(&self, channels: usize) -> usize {
        let per = self.patch_height * self.patch_width;
        match self.channels {
            ChannelMode::Grayscale => per,
            ChannelMode::PerChannel => per * channels,
        }
    }

    fn offsets(&self, height: usize, width: usize) -> Vec<(usize, usize)> {
        let ys = (0..=height - self.patch_height).step_by(self.stride_y);
        let xs: Vec<usize> = (0..=width - self.patch_width)
            .step_by(self.stride_x)
            .collect();
        ys.flat_map(|y| xs.iter().map(move |&x| (y, x))).collect()
    }

    pub fn patch_count(&self, height: usize, width: usize) -> usize {
        self.offsets(height, width).len()
    }
}

/// One data matrix per frame, one column per patch.
pub fn frames_to_patches(frames: &[Frame], cfg: &PatchConfig) -> Result<Vec<DMatrix<f64>>> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let (h, w, ch) = (first.height, first.width, first.channels);
    cfg.validate(h, w)?;
    let offsets = cfg.offsets(h, w);
    let (ph, pw) = (cfg.patch_height, cfg.patch_width);
    frames
        .iter()
        .map(|f| {
            if (f.height, f.width, f.channels) != (h, w, ch) {
                return Err(Error::mismatch(
                    "frame shape",
                    format!("{h}x{w}x{ch}"),
                    format!("{}x{}x{}", f.height, f.width, f.channels),
                ));
            }
            let mut m = DMatrix::zeros(cfg.patch_len(ch), offsets.len());
            for (col, &(oy, ox)) in offsets.iter().enumerate() {
                for py in 0..ph {
                    for px in 0..pw {
                        let at = py * pw + px;
                        match cfg.channels {
                            ChannelMode::Grayscale => {
                                let sum: f64 = (0..ch).map(|c| f.get(oy + py, ox + px, c)).sum();
                                m[(at, col)] = sum / ch as f64;
                            }
                            ChannelMode::PerChannel => {
                                for c in 0..ch {
                                    m[(c * ph * pw + at, col)] = f.get(oy + py, ox + px, c);
                                }
                            }
                        }
                    }
                }
            }
            Ok(m)
        })
        .collect()
}

/// Inverse of [`frames_to_patches`]: overlapping contributions are averaged
/// and pixels covered by no patch are 0. Grayscale patches give one-channel
/// frames.
pub fn patches_to_frames(
    matrices: &[DMatrix<f64>],
    cfg: &PatchConfig,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<Vec<Frame>> {
    cfg.validate(height, width)?;
    let out_channels = match cfg.channels {
        ChannelMode::Grayscale => 1,
        ChannelMode::PerChannel => channels,
    };
    let offsets = cfg.offsets(height, width);
    let rows = cfg.patch_len(channels);
    let (ph, pw) = (cfg.patch_height, cfg.patch_width);
    matrices
        .iter()
        .map(|m| {
            if m.shape() != (rows, offsets.len()) {
                return Err(Error::mismatch(
                    "patch matrix shape",
                    format!("{rows}x{}", offsets.len()),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ));
            }
            let mut frame = Frame::zeros(height, width, out_channels)?;
            let mut hits = vec![0u32; height * width];
            for (col, &(oy, ox)) in offsets.iter().enumerate() {
                for py in 0..ph {
                    for px in 0..pw {
                        let (y, x) = (oy + py, ox + px);
                        hits[y * width + x] += 1;
                        for c in 0..out_channels {
                            let at = frame.index(y, x, c);
                            frame.data[at] += m[(c * ph * pw + py * pw + px, col)];
                        }
                    }
                }
            }
            for (p, &n) in hits.iter().enumerate() {
                if n > 1 {
                    for c in 0..out_channels {
                        frame.data[p * out_channels + c] /= f64::from(n);
                    }
                }
            }
            Ok(frame)
        })
        .collect()
}

/// Samples with one integer label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    pub data: DMatrix<f64>,
    pub labels: Vec<u32>,
}

impl LabeledPool {
    pub fn new(data: DMatrix<f64>, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != data.ncols() {
            return Err(Error::mismatch(
                "labels per column",
                data.ncols(),
                labels.len(),
            ));
        }
        Ok(Self { data, labels })
    }

    /// Reads samples and a `1 x n` (or `n x 1`) matrix of labels.
    pub fn read(data: &Path, labels: &Path) -> Result<Self> {
        let m = read_matrix(data)?;
        let l = read_matrix(labels)?;
        if l.nrows() != 1 && l.ncols() != 1 {
            return Err(format_err(labels, "labels must be a single row or column"));
        }
        let labels = l
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX) {
                    Ok(v as u32)
                } else {
                    Err(format_err(
                        labels,
                        format!("label {v} is not a nonnegative integer"),
                    ))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(m, labels)
    }

    fn by_label(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            map.entry(l).or_default().push(i);
        }
        map
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub data: DMatrix<f64>,
    pub labels: Vec<u32>,
    /// Pool columns the samples came from.
    pub indices: Vec<usize>,
}

impl ClientDataset {
    pub fn histogram(&self) -> BTreeMap<u32, usize> {
        let mut h = BTreeMap::new();
        for &l in &self.labels {
            *h.entry(l).or_default() += 1;
        }
        h
    }
}

/// Number of majority samples: `floor(fraction * count)`, with a 1e-9 guard
/// against products like `0.29 * 100` landing just below an integer.
pub fn majority_count(fraction: f64, count: usize) -> usize {
    (fraction * count as f64 + 1e-9).floor() as usize
}

/// A client dataset of `count` samples, `floor(fraction * count)` of them with
/// label `majority`. The rest cycle through the other labels in increasing
/// order. Samples are drawn without replacement, majority first.
pub fn build_imbalanced_split(
    pool: &LabeledPool,
    majority: u32,
    fraction: f64,
    count: usize,
    seed: u64,
) -> Result<ClientDataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!(
            "fraction {fraction} must lie in [0, 1]"
        )));
    }
    let groups = pool.by_label();
    let major = majority_count(fraction, count);
    let minor = count - major;
    let others: Vec<u32> = groups.keys().copied().filter(|&l| l != majority).collect();
    let mut need: BTreeMap<u32, usize> = BTreeMap::new();
    if major > 0 {
        need.insert(majority, major);
    }
    if minor > 0 {
        if others.is_empty() {
            return Err(Error::InsufficientPool(format!(
                "{minor} minority samples requested but the pool only has label {majority}"
            )));
        }
        for k in 0..minor {
            *need.entry(others[k % others.len()]).or_default() += 1;
        }
    }
    let deficits: Vec<String> = need
        .iter()
        .filter_map(|(l, &n)| {
            let have = groups.get(l).map_or(0, Vec::len);
            (have < n).then(|| format!("label {l}: need {n}, have {have} (short {})", n - have))
        })
        .collect();
    if !deficits.is_empty() {
        return Err(Error::InsufficientPool(deficits.join("; ")));
    }

    let mut rng = rng::stream(seed, streams::SPLIT);
    let mut indices = Vec::with_capacity(count);
    let order = std::iter::once(majority).chain(others.iter().copied());
    for label in order {
        let Some(&n) = need.get(&label) else { continue };
        let mut candidates = groups[&label].clone();
        candidates.shuffle(&mut rng);
        indices.extend_from_slice(&candidates[..n]);
    }
    let data = pool.data.select_columns(&indices);
    let labels = indices.iter().map(|&i| pool.labels[i]).collect();
    Ok(ClientDataset {
        data,
        labels,
        indices,
    })
}

/// `path` with `suffix` inserted before the extension: `y.bin` -> `y_3.bin`.
pub fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{suffix}.{ext}"),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let m = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 0.1).powi(j as i32 + 1) / 7.0);
        assert_eq!(decode_binary(&encode_binary(&m), p()).unwrap(), m);
    }

    #[test]
    fn binary_layout_is_row_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let bytes = encode_binary(&m);
        assert_eq!(&bytes[..4], b"PDLM");
        assert_eq!(bytes.len(), 24 + 32);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 2.0);
    }

    #[test]
    fn truncated_payload_reports_lengths() {
        let m = DMatrix::from_element(2, 3, 1.0);
        let bytes = encode_binary(&m);
        let err = decode_binary(&bytes[..bytes.len() - 5], p())
            .unwrap_err()
            .to_string();
        assert!(err.contains("needs 48 bytes, found 43"), "{err}");
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut bytes = encode_binary(&DMatrix::from_element(1, 1, 1.0));
        bytes[4] = 2;
        let err = decode_binary(&bytes, p()).unwrap_err().to_string();
        assert!(err.contains("byte 4") && err.contains("version 2"), "{err}");
        bytes[0] = b'X';
        assert!(decode_binary(&bytes, p()).is_err());
    }

    #[test]
    fn non_finite_binary_entry_reports_offset() {
        let mut m = DMatrix::from_element(1, 3, 1.0);
        m[(0, 2)] = f64::NAN;
        let err = decode_binary(&encode_binary(&m), p())
            .unwrap_err()
            .to_string();
        assert!(err.contains("byte 40"), "{err}");
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let m = DMatrix::from_fn(2, 3, |i, j| 1.0 / (1.0 + i as f64 + 3.0 * j as f64));
        let text = encode_csv(&m);
        assert!(text.starts_with("2,3\n"));
        assert_eq!(decode_csv(&text, p()).unwrap(), m);

        let err = decode_csv("2,2\n1,2\n3\n", p()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = decode_csv("1,2\n1,inf\n", p()).unwrap_err().to_string();
        assert!(
            err.contains("line 2") && err.contains("non-finite"),
            "{err}"
        );
        assert!(decode_csv("2,2\n1,2\n", p()).is_err());
        assert!(decode_csv("x\n", p()).is_err());
    }

    #[test]
    fn csv_tolerates_rounded_values() {
        let text = "1,2\n0.1000000000001,2\n";
        let m = decode_csv(text, p()).unwrap();
        assert!((m[(0, 0)] - 0.1).abs() <= 1e-12);
    }

    #[test]
    fn file_round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_fn(6, 20, |i, j| ((i * 31 + j * 7) as f64).sin());
        for name in ["y.bin", "y.csv"] {
            let path = dir.path().join(name);
            write_matrix(&m, &path).unwrap();
            assert_eq!(read_matrix(&path).unwrap(), m);
        }
        assert!(matches!(
            read_matrix(&dir.path().join("none.bin")),
            Err(Error::Io { .. })
        ));
    }

    fn ramp(h: usize, w: usize, c: usize) -> Frame {
        Frame::new(h, w, c, (0..h * w * c).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn video_tiles_give_reported_shape() {
        let f = Frame::zeros(480, 640, 3).unwrap();
        let m = frames_to_patches(&[f], &PatchConfig::video()).unwrap();
        assert_eq!(m[0].shape(), (576, 1600));
    }

    #[test]
    fn vectorisation_order() {
        let f = ramp(2, 3, 2);
        let cfg = PatchConfig::tiles(2, 2, ChannelMode::PerChannel);
        let m = &frames_to_patches(std::slice::from_ref(&f), &cfg).unwrap()[0];
        assert_eq!(m.ncols(), 1);
        // Channel 0 block then channel 1 block, each row-major.
        let expect: Vec<f64> = [
            (0, 0, 0),
            (0, 1, 0),
            (1, 0, 0),
            (1, 1, 0),
            (0, 0, 1),
            (0, 1, 1),
            (1, 0, 1),
            (1, 1, 1),
        ]
        .iter()
        .map(|&(y, x, c)| f.get(y, x, c))
        .collect();
        assert_eq!(m.column(0).as_slice(), expect.as_slice());
    }

    #[test]
    fn whole_frame_patch_is_one_column() {
        let f = ramp(4, 5, 1);
        let cfg = PatchConfig::tiles(4, 5, ChannelMode::Grayscale);
        assert_eq!(frames_to_patches(&[f], &cfg).unwrap()[0].shape(), (20, 1));
    }

    #[test]
    fn tiles_round_trip() {
        let frames = vec![ramp(6, 8, 3), Frame::zeros(6, 8, 3).unwrap()];
        let cfg = PatchConfig::tiles(3, 4, ChannelMode::PerChannel);
        let m = frames_to_patches(&frames, &cfg).unwrap();
        assert_eq!(patches_to_frames(&m, &cfg, 6, 8, 3).unwrap(), frames);
    }

    #[test]
    fn overlapping_constant_patches_give_constant_frame() {
        let cfg = PatchConfig {
            patch_height: 3,
            patch_width: 3,
            stride_y: 1,
            stride_x: 2,
            channels: ChannelMode::Grayscale,
        };
        let n = cfg.patch_count(5, 7);
        let m = DMatrix::from_element(9, n, 2.5);
        let f = &patches_to_frames(&[m], &cfg, 5, 7, 3).unwrap()[0];
        assert_eq!(f.channels(), 1);
        assert!(f.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn grayscale_averages_channels() {
        let f = Frame::new(1, 1, 3, vec![1.0, 2.0, 6.0]).unwrap();
        let cfg = PatchConfig::tiles(1, 1, ChannelMode::Grayscale);
        assert_eq!(frames_to_patches(&[f], &cfg).unwrap()[0][(0, 0)], 3.0);
    }

    #[test]
    fn patch_errors() {
        let cfg = PatchConfig::tiles(5, 5, ChannelMode::Grayscale);
        assert!(frames_to_patches(&[ramp(4, 8, 1)], &cfg).is_err());
        let cfg = PatchConfig::tiles(2, 2, ChannelMode::Grayscale);
        assert!(frames_to_patches(&[ramp(4, 4, 1), ramp(4, 6, 1)], &cfg).is_err());
        assert!(patches_to_frames(&[DMatrix::zeros(4, 3)], &cfg, 4, 4, 1).is_err());
    }

    #[test]
    fn frame_matrix_round_trip() {
        let f = ramp(3, 4, 2);
        let m = f.to_matrix();
        assert_eq!(m.shape(), (3, 8));
        assert_eq!(Frame::from_matrix(&m, 2).unwrap(), f);
        assert!(Frame::from_matrix(&m, 3).is_err());
    }

    fn digits(per_label: usize) -> LabeledPool {
        let labels: Vec<u32> = (0..10)
            .flat_map(|l| std::iter::repeat_n(l, per_label))
            .collect();
        let data = DMatrix::from_fn(2, labels.len(), |i, j| (i * 1000 + j) as f64);
        LabeledPool::new(data, labels).unwrap()
    }

    #[test]
    fn imbalanced_split_counts() {
        let pool = digits(600);
        let ds = build_imbalanced_split(&pool, 3, 0.9, 500, 7).unwrap();
        let h = ds.histogram();
        assert_eq!(h[&3], 450);
        assert_eq!(h.values().sum::<usize>(), 500);
        assert!(h
            .iter()
            .filter(|(l, _)| **l != 3)
            .all(|(_, &n)| n == 5 || n == 6));
        let mut idx = ds.indices.clone();
        idx.sort();
        idx.dedup();
        assert_eq!(idx.len(), 500);
        for (k, &i) in ds.indices.iter().enumerate() {
            assert_eq!(ds.data.column(k), pool.data.column(i));
        }
        assert_eq!(ds, build_imbalanced_split(&pool, 3, 0.9, 500, 7).unwrap());
    }

    #[test]
    fn single_class_and_deficit() {
        let pool = digits(20);
        let ds = build_imbalanced_split(&pool, 1, 1.0, 15, 0).unwrap();
        assert!(ds.labels.iter().all(|&l| l == 1));
        let err = build_imbalanced_split(&pool, 1, 0.9, 100, 0)
            .unwrap_err()
            .to_string();
        assert!(err.contains("label 1: need 90, have 20"), "{err}");
    }

    #[test]
    fn majority_count_guard() {
        assert_eq!(majority_count(0.9, 500), 450);
        assert_eq!(majority_count(0.29, 100), 29);
        assert_eq!(majority_count(0.5, 3), 1);
    }

    #[test]
    fn suffix_before_extension() {
        assert_eq!(
            suffixed(Path::new("a/y.bin"), "3"),
            PathBuf::from("a/y_3.bin")
        );
        assert_eq!(suffixed(Path::new("y"), "x"), PathBuf::from("y_x"));
    }
}
