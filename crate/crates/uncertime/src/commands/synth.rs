//! `synth`: generate a synthetic event log (with ground truth) or a 1-D
//! heteroscedastic regression sample.

use uncertime_core::synth::{
    gen_eventlog, gen_regression1d, EventLogSpec, NoiseProfile, Regression1dSpec,
};

use crate::config::RunConfig;
use crate::rundir::RunDir;
use crate::{csvio, CliError};

pub fn run(cfg: &RunConfig, run: &mut RunDir) -> Result<(), CliError> {
    match cfg.synth.kind.as_str() {
        "eventlog" => {
            let spec = EventLogSpec {
                cases: cfg.synth.cases,
                branch_probability: cfg.synth.branch_probability,
                duration_sigma: cfg.synth.duration_sigma,
                arrival_step_seconds: cfg.synth.arrival_step_seconds,
                drift: cfg.synth.drift,
                seed: cfg.seed,
            };
            let log = gen_eventlog(&spec);
            // The generator emits exactly one extra categorical (resource)
            // and one extra numeric (amount) column.
            let mut schema = cfg.schema.to_spec()?;
            schema.categorical = vec!["resource".to_string()];
            schema.numeric = vec!["amount".to_string()];
            csvio::write_eventlog(run.file("log.csv"), &log.cases, &schema)
                .map_err(CliError::module("synthdata"))?;
            run.record("log.csv")?;
            csvio::write_truth(run.file("truth.csv"), &log)
                .map_err(CliError::module("synthdata"))?;
            run.record("truth.csv")?;
            let prefixes: usize = log.cases.iter().map(|c| c.events.len()).sum();
            println!(
                "synth: {} cases, {} events/prefixes -> {}",
                log.cases.len(),
                prefixes,
                run.path.display()
            );
        }
        "regression" => {
            let spec = Regression1dSpec {
                n: cfg.synth.n,
                noise: NoiseProfile::SineHetero {
                    base: cfg.synth.noise_base,
                    amp: cfg.synth.noise_amp,
                },
                seed: cfg.seed,
                ..Regression1dSpec::default()
            };
            let data = gen_regression1d(&spec);
            csvio::write_regression(run.file("regression.csv"), &data)
                .map_err(CliError::module("synthdata"))?;
            run.record("regression.csv")?;
            println!("synth: {} regression samples -> {}", data.x.len(), run.path.display());
        }
        other => {
            return Err(CliError::Config(format!(
                "synth.kind must be eventlog|regression, got `{other}`"
            )))
        }
    }
    Ok(())
}
