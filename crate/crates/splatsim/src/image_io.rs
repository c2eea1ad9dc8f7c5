use std::fs;
use std::io;
use std::path::Path;

use splatsim_core::splat::Image;

/// 8-bit RGB PNG. The encoder settings are fixed so equal images give equal
/// bytes.
pub fn encode_png(image: &Image) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, image.width, image.height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::Fast);
        let mut writer = encoder.write_header().expect("in-memory PNG header");
        writer.write_image_data(&image.data).expect("in-memory PNG data");
    }
    out
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, png::DecodingError> {
    let decoder = png::Decoder::new(io::Cursor::new(bytes));
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(png::DecodingError::LimitsExceeded);
    }
    buf.truncate(info.buffer_size());
    Ok(Image { width: info.width, height: info.height, data: buf })
}

/// Binary PPM (`P6`).
pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    out
}

/// Write as PPM when the extension is `.ppm`, PNG otherwise.
pub fn write_image(image: &Image, path: &Path) -> io::Result<()> {
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("ppm") => encode_ppm(image),
        _ => encode_png(image),
    };
    fs::write(path, bytes)
}
