use rand::RngCore;

use super::DebiasError;
use crate::seed::Seed;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

/// RGB8 PNG whose channels are independent uniform bytes.
pub fn make_noise_image(width: u32, height: u32, seed: Seed) -> Result<Vec<u8>, DebiasError> {
    if width == 0 || height == 0 {
        return Err(DebiasError::ZeroDimension { width, height });
    }
    let mut pixels = vec![0u8; width as usize * height as usize * 3];
    seed.rng().fill_bytes(&mut pixels);

    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, width, height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| DebiasError::Png(e.to_string());
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(&pixels).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(out)
}

/// Width and height from a PNG header, without decoding pixel data.
pub fn png_dimensions(bytes: &[u8]) -> Option<(u32, u32)> {
    if bytes.len() < 24 || bytes[..8] != PNG_SIGNATURE || &bytes[12..16] != b"IHDR" {
        return None;
    }
    let be = |at: usize| u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    Some((be(16), be(20)))
}
