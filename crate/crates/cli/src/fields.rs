//! Field descriptions accepted in experiment parameters.
//!
//! ```json
//! 3.0                                  // constant
//! "zero" | "fixed-point"               // named fields
//! {"amplitude": 2.0, "mode": 1}        // a·sin(kπ(x+1)/2)
//! {"random": {"amplitude": 4.0, "seed": 7}}
//! {"file": "field.csv"}                // CSV with header x,value
//! ```

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spm_core::det::fixed_point;
use spm_core::ergodics::random_field;
use spm_core::{Field, Grid, NoiseModel};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Named(String),
    Mode { amplitude: f64, mode: usize },
    Random { random: RandomField },
    File { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomField {
    pub amplitude: f64,
    pub seed: u64,
}

impl FieldSpec {
    pub fn build(&self, grid: &Grid, model: &NoiseModel) -> Result<Field, CliError> {
        match self {
            FieldSpec::Constant(c) => {
                if !c.is_finite() {
                    return Err(CliError::Config("constant field must be finite".into()));
                }
                Ok(grid.constant(*c))
            }
            FieldSpec::Named(name) => match name.as_str() {
                "zero" => Ok(grid.zeros()),
                "fixed-point" => Ok(fixed_point(model.forcing())?),
                other => Err(CliError::Config(format!(
                    "unknown field `{other}` (expected \"zero\" or \"fixed-point\")"
                ))),
            },
            FieldSpec::Mode { amplitude, mode } => {
                if *mode == 0 {
                    return Err(CliError::Config("mode index starts at 1".into()));
                }
                let k = *mode as f64;
                Ok(grid.sample(|x| amplitude * (0.5 * k * PI * (x + 1.0)).sin()))
            }
            FieldSpec::Random { random } => Ok(random_field(grid, random.amplitude, random.seed)),
            FieldSpec::File { file } => {
                let f = std::fs::File::open(file).map_err(|e| {
                    CliError::Config(format!("cannot open {}: {e}", file.display()))
                })?;
                let field = Field::read_csv(f)?;
                if field.len() != grid.n_interior() {
                    return Err(CliError::Config(format!(
                        "{} holds {} values, the grid has {} interior nodes",
                        file.display(),
                        field.len(),
                        grid.n_interior()
                    )));
                }
                Ok(grid.field(field.into_values())?)
            }
        }
    }
}
