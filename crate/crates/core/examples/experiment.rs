//! A small experiment defined inline and aggregated into a report table.

use hsaur::bench::experiment::{format_table, run_experiment, ExperimentConfig};

const CONFIG: &str = r#"
name = "inline"
seeds = { start = 0, count = 2 }

[[suite]]
kind = "estimation"
settings = ["closed"]

[[suite]]
kind = "puzzle"
levels = [[1, 1]]
methods = ["hsaur", "random"]
"#;

fn main() -> hsaur::Result<()> {
    let cfg = ExperimentConfig::parse(CONFIG)?;
    let report = run_experiment(&cfg, None)?;
    print!("{}", format_table(&report.rows));
    Ok(())
}
