//! Datasets as CSV, sketches as binary files, and experiments from config
//! text, written to a temporary directory.

use dualrp::cli::{run_experiment_with_workers, validate_config, Format};
use dualrp::io::{read_dataset_csv, write_dataset_csv};
use dualrp::model::{make_low_rank, LabelRule};
use dualrp::sketch::ProjectionSketch;

fn main() -> dualrp::Result<()> {
    let dir = std::env::temp_dir().join("dualrp-example");
    std::fs::create_dir_all(&dir).map_err(|source| dualrp::Error::Io { path: dir.clone(), source })?;

    let data = make_low_rank(100, 60, 4, LabelRule::SignOfPlant, 9)?;
    let data_path = dir.join("data.csv");
    write_dataset_csv(&data_path, &data)?;
    assert_eq!(read_dataset_csv(&data_path)?.features(), data.features());

    let sketch_path = dir.join("sketch.bin");
    ProjectionSketch::gaussian(&data, 40, 9)?.save(&sketch_path)?;

    let config = validate_config(&format!(
        "experiment = naive_vs_drp\ndata_file = \"{}\"\nsketch_file = \"{}\"\nloss = square\nformat = csv",
        data_path.display(),
        sketch_path.display()
    ))?;
    let report = run_experiment_with_workers(&config, 1)?;
    print!("{}", report.render(Format::Csv));
    println!("files in {}", dir.display());
    Ok(())
}
