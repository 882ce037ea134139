//! 32-bit float WAV files via hound, plus a RIFF `LIST`/`INFO` comment
//! appended after the data chunk to carry the artifact id.

use std::fs::OpenOptions;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub fs: f64,
    /// One vector per channel.
    pub channels: Vec<Vec<f64>>,
}

impl WavData {
    pub fn n_samples(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }
}

pub fn write_wav(path: &Path, fs: f64, channels: &[&[f64]]) -> Result<()> {
    if channels.is_empty() || channels[0].is_empty() {
        return Err(Error::NothingToSave);
    }
    let n = channels[0].len();
    if channels.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("channels differ in length".into()));
    }
    if fs.fract() != 0.0 || !(fs > 0.0) {
        return Err(Error::InvalidInput(format!("sample rate {fs} is not a positive integer")));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate: fs as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec)?;
    for i in 0..n {
        for c in channels {
            w.write_sample(c[i] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}

pub fn read_wav(path: &Path) -> Result<WavData> {
    let mut r = WavReader::open(path)?;
    let spec = r.spec();
    let nch = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => r.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / nch.max(1)); nch];
    for frame in interleaved.chunks_exact(nch) {
        for (c, v) in channels.iter_mut().zip(frame) {
            c.push(*v);
        }
    }
    Ok(WavData {
        fs: spec.sample_rate as f64,
        channels,
    })
}

/// Append a `LIST`/`INFO` chunk holding one `ICMT` comment and fix the RIFF size.
pub fn append_info_comment(path: &Path, comment: &str) -> Result<()> {
    let mut text = comment.as_bytes().to_vec();
    text.push(0);
    if text.len() % 2 == 1 {
        text.push(0);
    }
    let mut chunk = Vec::with_capacity(text.len() + 20);
    chunk.extend_from_slice(b"LIST");
    chunk.extend_from_slice(&((4 + 8 + text.len()) as u32).to_le_bytes());
    chunk.extend_from_slice(b"INFO");
    chunk.extend_from_slice(b"ICMT");
    chunk.extend_from_slice(&(text.len() as u32).to_le_bytes());
    chunk.extend_from_slice(&text);

    let mut f = OpenOptions::new().read(true).write(true).open(path)?;
    let end = f.seek(SeekFrom::End(0))?;
    f.write_all(&chunk)?;
    let riff_size = (end + chunk.len() as u64 - 8) as u32;
    f.seek(SeekFrom::Start(4))?;
    f.write_all(&riff_size.to_le_bytes())?;
    f.flush()?;
    Ok(())
}

/// The first `ICMT` comment in the file, if any.
pub fn read_info_comment(path: &Path) -> Result<Option<String>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "not a RIFF/WAVE file".into(),
        });
    }
    let u32_at = |p: usize| u32::from_le_bytes([bytes[p], bytes[p + 1], bytes[p + 2], bytes[p + 3]]) as usize;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let size = u32_at(pos + 4);
        let body = pos + 8;
        let end = (body + size).min(bytes.len());
        if &bytes[pos..pos + 4] == b"LIST" && end >= body + 4 && &bytes[body..body + 4] == b"INFO" {
            let mut p = body + 4;
            while p + 8 <= end {
                let len = u32_at(p + 4);
                let stop = (p + 8 + len).min(end);
                if &bytes[p..p + 4] == b"ICMT" {
                    let raw = &bytes[p + 8..stop];
                    let text = raw.split(|&b| b == 0).next().unwrap_or_default();
                    return Ok(Some(String::from_utf8_lossy(text).into_owned()));
                }
                p += 8 + len + (len & 1);
            }
        }
        pos = body + size + (size & 1);
    }
    Ok(None)
}
