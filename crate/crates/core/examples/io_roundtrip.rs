//! PGM/PPM images and PFM disparity maps, including the invalid-pixel
//! sentinel and a byte-level look at the file layout.
//!
//!     cargo run --example io_roundtrip

use cubg::imageio::{encode_pfm, read_pfm, read_pnm, write_disparity_png_like, write_pfm, write_pnm};
use cubg::{DenseArray, DisparityMap, Image};

fn main() -> cubg::Result<()> {
    let dir = std::env::temp_dir().join("cubg-io-example");
    std::fs::create_dir_all(&dir)?;

    let d = DisparityMap::new(
        DenseArray::from_vec(&[2, 3], vec![1.5, -0.25, 7.0, 0.0, 3.0, 12.5])?,
        vec![true, true, true, false, true, true],
    )?;
    let mut bytes = Vec::new();
    encode_pfm(&mut bytes, &d)?;
    let header_end = bytes.len() - 4 * 6;
    println!("PFM header {:?}", String::from_utf8_lossy(&bytes[..header_end]));
    for row in bytes[header_end..].chunks(12) {
        let v: Vec<f32> = row.chunks(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        println!("  stored row {v:?}");
    }

    let path = dir.join("d.pfm");
    write_pfm(&path, &d)?;
    let back = read_pfm(&path)?;
    println!("round trip equal: {}, valid mask {:?}", back == d, back.valid());

    let rgb = Image::new(DenseArray::from_vec(&[1, 2, 3], vec![255.0, 0.0, 0.0, 0.0, 128.0, 255.0])?)?;
    write_pnm(dir.join("px.ppm"), &rgb)?;
    println!("PPM round trip equal: {}", read_pnm(dir.join("px.ppm"))? == rgb);

    write_disparity_png_like(dir.join("d_vis.pgm"), &d, 16.0)?;
    println!("8-bit preview: {:?}", read_pnm(dir.join("d_vis.pgm"))?.data().data());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
