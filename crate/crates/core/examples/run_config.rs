//! The run configuration: defaults, strict parsing and the resolved form.

use stkd::config::RunConfig;

fn main() {
    let partial = r#"{"student": {"hidden": 16}, "distill": {"temperature": 4.0}}"#;
    let cfg = RunConfig::from_json(partial).expect("valid config");
    println!("{}", cfg.to_json());

    let typo = r#"{"distill": {"lamda_spatial": 0.5}}"#;
    match RunConfig::from_json(typo) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {e}"),
    }
}
