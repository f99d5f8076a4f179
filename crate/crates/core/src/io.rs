//! Binary artifact formats (little-endian, magic + version headers), CSV
//! export and binary PGM input.
//!
//! | file | header | payload |
//! |------|--------|---------|
//! | frames `XFSR` | magic, u32 version, u32 dtype, u64 N, u64 M, f64 period (36 bytes) | N×M values |
//! | mask `XMSK` | magic, u32 version, u64 full_pixels, u64 count (24 bytes) | count u64 |
//! | encoder `XENC` | magic, u32 version, u8 mode, u64 M, u64 K, u64 spectrum_len (33 bytes) | spectrum f64, M×K f64 |
//! | compressed `XCMP` | magic, u32 version, u64 K, u64 encoder id, u64 N (32 bytes) | N × (norm, K coefficients) f64 |
//!
//! Readers load the whole file and report failures with the byte offset at
//! which parsing stopped.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Result, XpcsError};
use crate::linalg::Matrix;
use crate::model::{CompressedSeries, EncoderId, EncoderMode, EncodingMatrix, FrameSeries, G2Curve, GrayImage, PixelMask, TtcMatrix};

pub const FORMAT_VERSION: u32 = 1;
pub const FRAMES_MAGIC: &[u8; 4] = b"XFSR";
pub const MASK_MAGIC: &[u8; 4] = b"XMSK";
pub const ENCODER_MAGIC: &[u8; 4] = b"XENC";
pub const COMPRESSED_MAGIC: &[u8; 4] = b"XCMP";

pub const FRAMES_HEADER_LEN: u64 = 36;
pub const MASK_HEADER_LEN: u64 = 24;
pub const ENCODER_HEADER_LEN: u64 = 33;
pub const COMPRESSED_HEADER_LEN: u64 = 32;
const COMPRESSED_N_OFFSET: u64 = 24;

/// Sample type of a frames file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameDtype {
    U16,
    F32,
    F64,
}

impl FrameDtype {
    pub fn code(self) -> u32 {
        match self {
            FrameDtype::U16 => 0,
            FrameDtype::F32 => 1,
            FrameDtype::F64 => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(FrameDtype::U16),
            1 => Some(FrameDtype::F32),
            2 => Some(FrameDtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> u64 {
        match self {
            FrameDtype::U16 => 2,
            FrameDtype::F32 => 4,
            FrameDtype::F64 => 8,
        }
    }

    fn representable(self, v: f64) -> bool {
        match self {
            FrameDtype::U16 => v.fract() == 0.0 && (0.0..=65535.0).contains(&v),
            FrameDtype::F32 => f64::from(v as f32) == v,
            FrameDtype::F64 => true,
        }
    }
}

impl std::str::FromStr for FrameDtype {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "u16" => Ok(FrameDtype::U16),
            "f32" => Ok(FrameDtype::F32),
            "f64" => Ok(FrameDtype::F64),
            _ => Err(format!("unknown dtype {s:?} (expected u16, f32 or f64)")),
        }
    }
}

pub fn frames_file_size(n: u64, m: u64, dtype: FrameDtype) -> u64 {
    FRAMES_HEADER_LEN + n * m * dtype.size()
}

pub fn mask_file_size(count: u64) -> u64 {
    MASK_HEADER_LEN + 8 * count
}

pub fn encoder_file_size(spectrum_len: u64, m: u64, k: u64) -> u64 {
    ENCODER_HEADER_LEN + 8 * spectrum_len + 8 * m * k
}

pub fn compressed_file_size(n: u64, k: u64) -> u64 {
    COMPRESSED_HEADER_LEN + n * 8 * (k + 1)
}

fn format_err(offset: u64, message: impl Into<String>) -> XpcsError {
    XpcsError::Format { offset, message: message.into() }
}

/// Bounds-checked little-endian reader over an in-memory file.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(XpcsError::Length { offset: self.pos as u64, expected: (n - (self.buf.len() - self.pos)) as u64 });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    /// Checks that `n` more bytes exist without consuming them.
    fn require(&self, n: u64) -> Result<()> {
        let left = (self.buf.len() - self.pos) as u64;
        if left < n {
            return Err(XpcsError::Length { offset: self.buf.len() as u64, expected: n - left });
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expected {
            return Err(format_err(0, format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let at = self.offset();
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(format_err(at, format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let at = self.offset();
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| format_err(at, format!("{what} {v} does not fit in memory")))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(format_err(self.pos as u64, format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn payload_len(at: u64, parts: &[u64]) -> Result<u64> {
    parts
        .iter()
        .try_fold(1u64, |acc, &p| acc.checked_mul(p))
        .ok_or_else(|| format_err(at, "payload size overflows"))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    Ok(std::fs::read(path)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes frames, failing if any value is not exactly representable in
/// `dtype`.
pub fn write_frames(path: impl AsRef<Path>, frames: &FrameSeries, dtype: FrameDtype) -> Result<()> {
    let data = frames.intensities().as_slice();
    if let Some(bad) = data.iter().position(|&v| !dtype.representable(v)) {
        return Err(XpcsError::contract(format!(
            "value {} at index {bad} is not representable as {dtype:?}",
            data[bad]
        )));
    }
    let mut w = create(path.as_ref())?;
    w.write_all(FRAMES_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&dtype.code().to_le_bytes())?;
    w.write_all(&(frames.n_frames() as u64).to_le_bytes())?;
    w.write_all(&(frames.n_pixels() as u64).to_le_bytes())?;
    w.write_all(&frames.frame_period().to_le_bytes())?;
    for &v in data {
        match dtype {
            FrameDtype::U16 => w.write_all(&(v as u16).to_le_bytes())?,
            FrameDtype::F32 => w.write_all(&(v as f32).to_le_bytes())?,
            FrameDtype::F64 => w.write_all(&v.to_le_bytes())?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a frames file, also returning its stored dtype.
pub fn read_frames_with_dtype(path: impl AsRef<Path>) -> Result<(FrameSeries, FrameDtype)> {
    let buf = read_all(path.as_ref())?;
    let mut c = Cursor::new(&buf);
    c.magic(FRAMES_MAGIC)?;
    c.version()?;
    let at = c.offset();
    let code = c.u32()?;
    let dtype = FrameDtype::from_code(code).ok_or_else(|| format_err(at, format!("unknown dtype code {code}")))?;
    let at_n = c.offset();
    let n = c.count("N")?;
    let m = c.count("M")?;
    if n == 0 || m == 0 {
        return Err(format_err(at_n, format!("empty frame series ({n}x{m})")));
    }
    let at = c.offset();
    let period = c.f64()?;
    if !(period > 0.0 && period.is_finite()) {
        return Err(format_err(at, format!("frame period {period} is not positive")));
    }
    c.require(payload_len(at_n, &[n as u64, m as u64, dtype.size()])?)?;
    let mut data = Vec::with_capacity(n * m);
    for _ in 0..n * m {
        let at = c.offset();
        let v = match dtype {
            FrameDtype::U16 => f64::from(u16::from_le_bytes(c.take(2)?.try_into().unwrap())),
            FrameDtype::F32 => f64::from(f32::from_le_bytes(c.take(4)?.try_into().unwrap())),
            FrameDtype::F64 => c.f64()?,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(format_err(at, format!("intensity {v} is negative or non-finite")));
        }
        data.push(v);
    }
    c.finish()?;
    let frames = FrameSeries::new(Matrix::from_vec(n, m, data)?, period)?;
    Ok((frames, dtype))
}

pub fn read_frames(path: impl AsRef<Path>) -> Result<FrameSeries> {
    read_frames_with_dtype(path).map(|(f, _)| f)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &PixelMask) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_all(MASK_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(mask.full_pixels() as u64).to_le_bytes())?;
    w.write_all(&(mask.count() as u64).to_le_bytes())?;
    for &i in mask.indices() {
        w.write_all(&(i as u64).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<PixelMask> {
    let buf = read_all(path.as_ref())?;
    let mut c = Cursor::new(&buf);
    c.magic(MASK_MAGIC)?;
    c.version()?;
    let full = c.count("full_pixels")?;
    let at = c.offset();
    let count = c.count("count")?;
    if count == 0 {
        return Err(format_err(at, "mask selects no pixels"));
    }
    c.require(payload_len(at, &[count as u64, 8])?)?;
    let mut idx = Vec::with_capacity(count);
    for _ in 0..count {
        let at = c.offset();
        let i = c.count("index")?;
        if i >= full {
            return Err(format_err(at, format!("index {i} out of range for {full} pixels")));
        }
        if idx.last().is_some_and(|&prev| prev >= i) {
            return Err(format_err(at, format!("index {i} is not strictly ascending")));
        }
        idx.push(i);
    }
    c.finish()?;
    PixelMask::new(full, idx)
}

pub fn write_encoder(path: impl AsRef<Path>, enc: &EncodingMatrix) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_all(ENCODER_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[enc.mode().code()])?;
    w.write_all(&(enc.m() as u64).to_le_bytes())?;
    w.write_all(&(enc.k() as u64).to_le_bytes())?;
    w.write_all(&(enc.singular_values().len() as u64).to_le_bytes())?;
    for s in enc.singular_values() {
        w.write_all(&s.to_le_bytes())?;
    }
    for v in enc.v().as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an encoder, re-checking orthonormality (integrity error if
/// `|VᵀV − I|` exceeds 1e-8 anywhere).
pub fn read_encoder(path: impl AsRef<Path>) -> Result<EncodingMatrix> {
    let buf = read_all(path.as_ref())?;
    let mut c = Cursor::new(&buf);
    c.magic(ENCODER_MAGIC)?;
    c.version()?;
    let at = c.offset();
    let code = c.u8()?;
    let mode = EncoderMode::from_code(code).ok_or_else(|| format_err(at, format!("unknown encoder mode {code}")))?;
    let at = c.offset();
    let m = c.count("M")?;
    let k = c.count("K")?;
    let s_len = c.count("spectrum_len")?;
    if m == 0 || k == 0 || k > m {
        return Err(format_err(at, format!("invalid encoder shape {m}x{k}")));
    }
    let spectrum_bytes = payload_len(at, &[s_len as u64, 8])?;
    let v_bytes = payload_len(at, &[m as u64, k as u64, 8])?;
    c.require(spectrum_bytes.checked_add(v_bytes).ok_or_else(|| format_err(at, "payload size overflows"))?)?;
    let spectrum = (0..s_len).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let v_at = c.offset();
    let v = (0..m * k).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    c.finish()?;
    let v = Matrix::from_vec(m, k, v).map_err(|e| format_err(v_at, e.to_string()))?;
    EncodingMatrix::new(v, spectrum, mode)
}

fn parse_compressed_header(c: &mut Cursor<'_>) -> Result<(usize, EncoderId, usize)> {
    c.magic(COMPRESSED_MAGIC)?;
    c.version()?;
    let at = c.offset();
    let k = c.count("K")?;
    if k == 0 {
        return Err(format_err(at, "K must be at least 1"));
    }
    let id = EncoderId(c.u64()?);
    let n = c.count("N")?;
    Ok((k, id, n))
}

pub fn write_compressed(path: impl AsRef<Path>, y: &CompressedSeries) -> Result<()> {
    let mut w = CompressedWriter::create(path, y.k(), y.encoder_id())?;
    for t in 0..y.len() {
        w.append(y.row(t), y.frame_norms()[t])?;
    }
    w.finish()
}

/// Reads a compressed store. The lossless flag is not persisted and comes
/// back `false`; callers holding the encoder can restore it.
pub fn read_compressed(path: impl AsRef<Path>) -> Result<CompressedSeries> {
    let buf = read_all(path.as_ref())?;
    let mut c = Cursor::new(&buf);
    let (k, id, n) = parse_compressed_header(&mut c)?;
    c.require(payload_len(COMPRESSED_N_OFFSET, &[n as u64, 8, k as u64 + 1])?)?;
    let mut y = CompressedSeries::empty(k, id);
    let mut row = vec![0.0; k];
    for _ in 0..n {
        let at = c.offset();
        let norm = c.f64()?;
        for v in row.iter_mut() {
            *v = c.f64()?;
        }
        y.append(&row, norm).map_err(|e| format_err(at, e.to_string()))?;
    }
    c.finish()?;
    Ok(y)
}

/// Appending writer for compressed stores. The frame count in the header is
/// rewritten by [`CompressedWriter::finish`] (or, best effort, on drop).
pub struct CompressedWriter {
    out: Option<BufWriter<File>>,
    k: usize,
    n: u64,
    encoder_id: EncoderId,
}

impl CompressedWriter {
    pub fn create(path: impl AsRef<Path>, k: usize, encoder_id: EncoderId) -> Result<Self> {
        if k == 0 {
            return Err(XpcsError::contract("K must be at least 1"));
        }
        let mut w = create(path.as_ref())?;
        w.write_all(COMPRESSED_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(k as u64).to_le_bytes())?;
        w.write_all(&encoder_id.0.to_le_bytes())?;
        w.write_all(&0u64.to_le_bytes())?;
        Ok(Self { out: Some(w), k, n: 0, encoder_id })
    }

    /// Opens an existing store for appending after validating its header and
    /// length.
    pub fn open_append(path: impl AsRef<Path>) -> Result<Self> {
        let mut file = OpenOptions::new().read(true).write(true).open(path.as_ref())?;
        let mut header = [0u8; COMPRESSED_HEADER_LEN as usize];
        let got = read_up_to(&mut file, &mut header)?;
        let mut c = Cursor::new(&header[..got]);
        let (k, id, n) = parse_compressed_header(&mut c)?;
        let len = file.metadata()?.len();
        let expected = compressed_file_size(n as u64, k as u64);
        if len < expected {
            return Err(XpcsError::Length { offset: len, expected: expected - len });
        }
        if len > expected {
            return Err(format_err(expected, format!("{} trailing bytes", len - expected)));
        }
        file.seek(SeekFrom::End(0))?;
        Ok(Self { out: Some(BufWriter::new(file)), k, n: n as u64, encoder_id: id })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn encoder_id(&self) -> EncoderId {
        self.encoder_id
    }

    pub fn append(&mut self, coefficients: &[f64], norm: f64) -> Result<()> {
        if coefficients.len() != self.k {
            return Err(XpcsError::shape(format!("row has length {}, store has K = {}", coefficients.len(), self.k)));
        }
        let w = self.out.as_mut().expect("writer used after finish");
        w.write_all(&norm.to_le_bytes())?;
        for c in coefficients {
            w.write_all(&c.to_le_bytes())?;
        }
        self.n += 1;
        Ok(())
    }

    fn close(&mut self) -> Result<()> {
        if let Some(w) = self.out.take() {
            let mut file = w.into_inner().map_err(|e| e.into_error())?;
            file.seek(SeekFrom::Start(COMPRESSED_N_OFFSET))?;
            file.write_all(&self.n.to_le_bytes())?;
            file.flush()?;
        }
        Ok(())
    }

    /// Flushes records and rewrites the frame count.
    pub fn finish(mut self) -> Result<()> {
        self.close()
    }
}

impl Drop for CompressedWriter {
    fn drop(&mut self) {
        let _ = self.close();
    }
}

fn read_up_to(file: &mut File, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        let r = file.read(&mut buf[got..])?;
        if r == 0 {
            break;
        }
        got += r;
    }
    Ok(got)
}

/// 17 significant digits: enough for any f64 to round-trip through text.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn export_ttc_csv(path: impl AsRef<Path>, g: &TtcMatrix) -> Result<()> {
    let mut w = create(path.as_ref())?;
    let n = g.n();
    for i in 0..n {
        let line: Vec<String> = g.values().row(i).iter().map(|&v| fmt17(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub const G2_CSV_HEADER: &str = "lag_seconds,g2,count";

pub fn export_g2_csv(path: impl AsRef<Path>, curve: &G2Curve) -> Result<()> {
    let mut w = create(path.as_ref())?;
    writeln!(w, "{G2_CSV_HEADER}")?;
    for i in 0..curve.len() {
        writeln!(w, "{},{},{}", fmt17(curve.lags[i]), fmt17(curve.values[i]), curve.counts[i])?;
    }
    w.flush()?;
    Ok(())
}

fn csv_field<T: std::str::FromStr>(s: &str, offset: u64) -> Result<T> {
    s.trim().parse().map_err(|_| format_err(offset, format!("cannot parse {s:?}")))
}

pub fn read_ttc_csv(path: impl AsRef<Path>) -> Result<TtcMatrix> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0u64;
    for line in text.lines() {
        let row = line.split(',').map(|f| csv_field(f, offset)).collect::<Result<Vec<f64>>>()?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(format_err(offset, "ragged TTC row"));
        }
        rows.push(row);
        offset += line.len() as u64 + 1;
    }
    if rows.is_empty() {
        return Err(format_err(0, "empty TTC file"));
    }
    TtcMatrix::from_matrix(Matrix::from_rows(&rows)?)
}

pub fn read_g2_csv(path: impl AsRef<Path>) -> Result<G2Curve> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines();
    if lines.next() != Some(G2_CSV_HEADER) {
        return Err(format_err(0, format!("expected header {G2_CSV_HEADER:?}")));
    }
    let mut offset = G2_CSV_HEADER.len() as u64 + 1;
    let mut curve = G2Curve { lags: vec![], values: vec![], counts: vec![] };
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(format_err(offset, "expected 3 columns"));
        }
        curve.lags.push(csv_field(f[0], offset)?);
        curve.values.push(csv_field(f[1], offset)?);
        curve.counts.push(csv_field(f[2], offset)?);
        offset += line.len() as u64 + 1;
    }
    Ok(curve)
}

/// Binary PGM (`P5`). Samples are one byte when `maxval < 256`, otherwise
/// two bytes big-endian, as the format prescribes.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    parse_pgm(&read_all(path.as_ref())?)
}

pub fn parse_pgm(buf: &[u8]) -> Result<GrayImage> {
    if buf.len() < 2 {
        return Err(XpcsError::Length { offset: buf.len() as u64, expected: (2 - buf.len()) as u64 });
    }
    if &buf[..2] != b"P5" {
        return Err(format_err(0, format!("not a binary PGM (magic {:?})", String::from_utf8_lossy(&buf[..2]))));
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        // Whitespace and comments before each header number.
        let mut saw_space = false;
        loop {
            match buf.get(pos) {
                Some(b) if b.is_ascii_whitespace() => {
                    saw_space = true;
                    pos += 1;
                }
                Some(b'#') => {
                    while buf.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                    saw_space = true;
                }
                Some(_) => break,
                None => return Err(XpcsError::Length { offset: pos as u64, expected: 1 }),
            }
        }
        if !saw_space {
            return Err(format_err(pos as u64, "expected whitespace in PGM header"));
        }
        let start = pos;
        while buf.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(pos as u64, "expected a decimal number in PGM header"));
        }
        *field = std::str::from_utf8(&buf[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| format_err(start as u64, "header number out of range"))?;
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(format_err(3, format!("empty image {w}x{h}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(pos as u64, format!("maxval {maxval} outside 1..=65535")));
    }
    match buf.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => return Err(format_err(pos as u64, "expected single whitespace after maxval")),
        None => return Err(XpcsError::Length { offset: pos as u64, expected: 1 }),
    }
    let (w, h) = (w as usize, h as usize);
    let bytes = if maxval < 256 { 1 } else { 2 };
    let need = w.checked_mul(h).and_then(|p| p.checked_mul(bytes)).ok_or_else(|| format_err(3, "image too large"))?;
    let mut c = Cursor { buf, pos };
    let data = c.take(need)?;
    let pixels: Vec<f64> = if bytes == 1 {
        data.iter().map(|&b| f64::from(b)).collect()
    } else {
        data.chunks_exact(2).map(|p| f64::from(u16::from_be_bytes([p[0], p[1]]))).collect()
    };
    if let Some(i) = pixels.iter().position(|&p| p > maxval as f64) {
        return Err(format_err((pos + i * bytes) as u64, format!("sample {} exceeds maxval {maxval}", pixels[i])));
    }
    GrayImage::new(w, h, maxval as u16, pixels)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write!(w, "P5\n{} {}\n{}\n", img.width, img.height, img.maxval)?;
    for &p in &img.pixels {
        if img.maxval < 256 {
            w.write_all(&[p as u8])?;
        } else {
            w.write_all(&(p as u16).to_be_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}
