//! File helpers: atomic writes and 8-bit RGB PNG encoding.

use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;

use crate::datamodel::ImageSize;
use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Encodes HWC 8-bit RGB data; `text` entries become tEXt chunks.
pub fn write_png(path: &Path, size: ImageSize, rgb: &[u8], text: &[(&str, &str)]) -> Result<()> {
    if size.channels != 3 || rgb.len() != size.len() {
        return Err(Error::Shape(format!(
            "{} bytes do not form a {size:?} RGB image",
            rgb.len()
        )));
    }
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, size.width as u32, size.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        for (k, v) in text {
            enc.add_text_chunk(k.to_string(), v.to_string())
                .map_err(|e| Error::Png(e.to_string()))?;
        }
        let mut w = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        w.write_image_data(rgb).map_err(|e| Error::Png(e.to_string()))?;
        w.finish().map_err(|e| Error::Png(e.to_string()))?;
    }
    write_atomic(path, &buf)
}

/// Decodes an 8-bit RGB PNG into HWC bytes.
pub fn read_png(path: &Path) -> Result<(ImageSize, Vec<u8>)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let png_err = |e: png::DecodingError| Error::Png(format!("{}: {e}", path.display()));
    let mut reader = png::Decoder::new(BufReader::new(f)).read_info().map_err(png_err)?;
    let mut buf = vec![
        0;
        reader
            .output_buffer_size()
            .ok_or_else(|| Error::Png("image too large".into()))?
    ];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Png(format!(
            "{}: expected 8-bit RGB, found {:?} {:?}",
            path.display(),
            info.color_type,
            info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    Ok((ImageSize::rgb(info.height as usize, info.width as usize), buf))
}

/// Reads the tEXt chunks of a PNG.
pub fn read_png_text(path: &Path) -> Result<Vec<(String, String)>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = png::Decoder::new(BufReader::new(f))
        .read_info()
        .map_err(|e| Error::Png(e.to_string()))?;
    Ok(reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .map(|t| (t.keyword.clone(), t.text.clone()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_with_text() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let size = ImageSize::rgb(3, 5);
        let data: Vec<u8> = (0..size.len() as u32).map(|i| (i * 7 % 256) as u8).collect();
        write_png(&p, size, &data, &[("config", "{\"a\":1}")]).unwrap();
        let (s, d) = read_png(&p).unwrap();
        assert_eq!((s, d), (size, data));
        assert_eq!(
            read_png_text(&p).unwrap(),
            vec![("config".to_string(), "{\"a\":1}".to_string())]
        );
    }
}
