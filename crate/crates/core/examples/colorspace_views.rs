//! Splitting RGB images into luminance and chrominance views (Lab and
//! YDbDr), and saving a procedural image as PPM.
//!
//! cargo run --release --example colorspace_views -- [out.ppm]

use cmc::io::write_ppm;
use cmc::views::{procedural_images, rgb_to_lab, rgb_to_ydbdr, srgb_pixel_to_lab};

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}

fn main() -> cmc::Result<()> {
    for rgb in [[1.0, 0.0, 0.0], [0.2, 0.4, 0.6], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]] {
        let [l, a, b] = srgb_pixel_to_lab(rgb);
        println!("rgb {rgb:?} -> L {l:.4} a {a:.4} b {b:.4}");
    }

    let images = procedural_images(4, 32, 4, 7)?;
    for (i, (img, label)) in images.iter().enumerate() {
        let (l, ab) = rgb_to_lab(img)?;
        let (y, dbdr) = rgb_to_ydbdr(img)?;
        let (lm, ls) = mean_std(l.data());
        let (am, as_) = mean_std(ab.data());
        let (ym, ys) = mean_std(y.data());
        let (dm, ds) = mean_std(dbdr.data());
        println!(
            "image {i} class {label}: L {lm:.2}±{ls:.2} ab {am:.2}±{as_:.2} | Y {ym:.3}±{ys:.3} DbDr {dm:.3}±{ds:.3}  shapes {:?} {:?}",
            l.shape(),
            ab.shape()
        );
    }

    if let Some(path) = std::env::args().nth(1) {
        let f = std::fs::File::create(&path)?;
        write_ppm(std::io::BufWriter::new(f), &images[0].0)?;
        println!("wrote {path}");
    }
    Ok(())
}
