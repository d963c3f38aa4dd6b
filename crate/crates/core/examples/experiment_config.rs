//! Driving an experiment from a JSON config, as the binary does.

use sdot::cli::{run_config, ExperimentConfig};

pub fn run_example() -> sdot::Result<usize> {
    let dir = std::env::temp_dir().join(format!("sdot-example-{}", std::process::id()));
    let text = format!(
        r#"{{ "mode": "rates", "alpha": 0.3, "cloud": {{ "kind": "grid", "k": [4, 8, 16] }},
             "dump": true, "output": {:?} }}"#,
        dir
    );
    let cfg = ExperimentConfig::from_json(&text, "inline.json".as_ref())?;
    let out = run_config(&cfg)?;
    let mut files: Vec<String> = std::fs::read_dir(&out.output)?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    files.sort();
    println!("{}", files.join("\n"));
    print!("{}", std::fs::read_to_string(out.output.join("report.csv"))?);
    std::fs::remove_dir_all(&dir)?;
    Ok(files.len())
}

fn main() -> sdot::Result<()> {
    run_example().map(|_| ())
}
