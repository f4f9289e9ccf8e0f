//! Synthesize a two-cluster image, rotate it, and round-trip it through PPM.
//!
//!     cargo run --example image_io -- [out_dir]

use spectral_vmamba::tensor_io::{read_ppm, rotate_quarter, synth_two_cluster, write_ppm, QuarterTurn};

fn main() -> spectral_vmamba::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().display().to_string());
    let img = synth_two_cluster(14, 14, 4, 0.5, 7)?;
    for q in QuarterTurn::ALL {
        let rotated = rotate_quarter(&img, q);
        let path = format!("{dir}/two_cluster_rot{}.ppm", q.turns());
        std::fs::write(&path, write_ppm(&rotated)?)?;
        let back = read_ppm(&std::fs::read(&path)?)?;
        assert_eq!(back.height(), rotated.height());
        println!("{path}: {}x{} ({q})", back.height(), back.width());
    }
    let full = (0..4).fold(img.clone(), |acc, _| rotate_quarter(&acc, QuarterTurn::new(1)));
    assert_eq!(full, img);
    println!("four quarter turns restore the original exactly");
    Ok(())
}
