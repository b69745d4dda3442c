//! Dataset generators, CSV round trip and a seeded train/test split.
//!
//! ```text
//! cargo run --example synthetic_data
//! ```

use geopath::data;

fn main() -> geopath::Result<()> {
    let blobs = data::gen_gaussian_mixture(5, 500, 2, 0.5, 0)?;
    let moons = data::gen_two_moons(1000, 0.1, 0)?;
    println!(
        "mixture: {} rows, {} classes",
        blobs.len(),
        blobs.class_count
    );
    println!(
        "moons:   {} rows, {} classes",
        moons.len(),
        moons.class_count
    );

    let (train, test) = data::split(&blobs, 0.2, 0)?;
    println!("split: {} train / {} test", train.len(), test.len());

    let file = std::env::temp_dir().join("geopath-moons.csv");
    data::write_csv(&moons, &file)?;
    let back = data::load_csv(&file, data::DEFAULT_LABEL_COLUMN)?;
    let exact = back
        .features
        .data
        .iter()
        .zip(&moons.features.data)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!(
        "wrote {} and reloaded it bit for bit: {exact}",
        file.display()
    );
    Ok(())
}
