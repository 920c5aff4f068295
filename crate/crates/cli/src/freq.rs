//! Frequency-response export: maximum singular value of the closed loop
//! around a report's controller, sampled on the circle and written as CSV.

use crate::config::RunConfig;
use crate::run::{controller_closed_loop, ModeRun};
use crate::CliError;
use hinf_core::grid;
use hinf_core::linalg;
use hinf_core::norms::rl_inf_norm;
use hinf_core::realization::MixedSystem;
use std::fmt::Write as _;

fn verification(e: impl std::fmt::Display) -> CliError {
    CliError::Verification(e.to_string())
}

/// CSV of sigma_max over a uniform grid, with the certified peak angle
/// inserted so the column maximum reports the norm itself rather than a
/// grid approximation of it.
pub fn emit_frequency_response(
    config: &RunConfig,
    run: &ModeRun,
    grid_size: usize,
) -> Result<String, CliError> {
    if grid_size < 2 {
        return Err(CliError::Config(format!(
            "frequency grid needs at least 2 points, got {grid_size}"
        )));
    }
    let tcl = controller_closed_loop(config, &run.report.controller)?;
    let norm = rl_inf_norm(&MixedSystem::from_stable(tcl.clone()).map_err(verification)?)
        .map_err(verification)?;
    let mut thetas = grid::uniform(grid_size);
    let peak = norm.theta_peak.rem_euclid(std::f64::consts::TAU);
    if let Err(pos) = thetas.binary_search_by(|t| t.partial_cmp(&peak).expect("finite angles")) {
        thetas.insert(pos, peak);
    }
    let mut out = String::from("theta,sigma_max\n");
    for theta in thetas {
        let gain = linalg::sigma_max_complex(&tcl.evaluate(theta).map_err(verification)?);
        writeln!(out, "{theta},{gain}").expect("string write");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::AuditSummary;
    use hinf_core::realization::RealizationSS;
    use hinf_core::synthesis::SynthesisReport;

    fn flat_config() -> RunConfig {
        // B1 = 0, so the disturbance path is the static D11 = diag(2, 1)
        // and the open-loop response is flat at 2.
        serde_json::from_str(
            r#"{
                "plant": {
                    "A": [[0.0]],
                    "B1": [[0.0, 0.0]],
                    "B2": [[1.0]],
                    "C1": [[1.0], [0.0]],
                    "C2": [[0.0]],
                    "D11": [[2.0, 0.0], [0.0, 1.0]],
                    "D12": [[0.0], [1.0]],
                    "D21": [[0.0, 0.0]],
                    "D22": [[0.0]]
                },
                "full_information": true,
                "modes": ["centralized"]
            }"#,
        )
        .unwrap()
    }

    fn zero_run() -> ModeRun {
        ModeRun {
            report: SynthesisReport {
                mode: "centralized".into(),
                gamma: 2.0,
                y_norm: 0.0,
                achieved: 2.0,
                steps: vec![],
                q: RealizationSS::zero(1, 2),
                controller: RealizationSS::zero(1, 2),
                mask_residual: None,
                lmi_slack: None,
            },
            audit: AuditSummary {
                reproduced: 2.0,
                from_controller: 2.0,
                spot_worst: 2.0,
                spot_samples: 0,
            },
        }
    }

    #[test]
    fn zero_controller_gives_the_open_loop_profile() {
        let csv = emit_frequency_response(&flat_config(), &zero_run(), 16).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("theta,sigma_max"));
        let mut rows = 0;
        for line in lines {
            let sigma: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!((sigma - 2.0).abs() < 1e-9, "profile not flat: {line}");
            rows += 1;
        }
        assert!(rows >= 16);
    }

    #[test]
    fn degenerate_grid_is_rejected() {
        let err = emit_frequency_response(&flat_config(), &zero_run(), 1).unwrap_err();
        assert!(matches!(err, CliError::Config(_)), "got {err}");
    }
}
