//! Writes the bundled fixture files into `crates/core/fixtures/`.

use std::path::PathBuf;

use npsynth::fixtures::{fixture_content_weights, fixture_vgg_weights};
use npsynth::image_io::{write_image, RgbImage};
use npsynth::npsw::{write_weights, WeightTable, WeightTensor};

fn main() -> npsynth::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir)?;

    write_weights(dir.join("vgg_fixture.npsw"), &fixture_vgg_weights())?;
    write_weights(dir.join("content_fixture.npsw"), &fixture_content_weights())?;

    let mut scalar = WeightTable::new();
    scalar.insert("scalar", WeightTensor::new(vec![1, 1, 1, 1], vec![2.0]));
    write_weights(dir.join("scalar.npsw"), &scalar)?;

    write_image(dir.join("white_1x1.ppm"), &RgbImage::new(1, 1, vec![255; 3])?)?;
    println!("wrote fixtures to {}", dir.display());
    Ok(())
}
