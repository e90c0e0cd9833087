use clap::{Args, ValueEnum};
use serde::Serialize;
use specmer::analysis::{speedup, SpeedupMode, SpeedupParams};

use crate::error::CliError;
use crate::io::emit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Vanilla,
    Batch,
    Serial,
}

impl From<ModeArg> for SpeedupMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Vanilla => SpeedupMode::Vanilla,
            ModeArg::Batch => SpeedupMode::Batch,
            ModeArg::Serial => SpeedupMode::Serial,
        }
    }
}

#[derive(Args, Debug)]
pub struct SpeedupArgs {
    /// Acceptance ratio in [0, 1].
    #[arg(long)]
    alpha: f64,
    /// Draft tokens per iteration.
    #[arg(long)]
    gamma: usize,
    /// Cost coefficient; derived from --mp/--mq/--mk when omitted.
    #[arg(long)]
    ce: Option<f64>,
    /// Batch generation cost factor.
    #[arg(long, default_value_t = 1.0)]
    xi: f64,
    #[arg(long, default_value_t = 1)]
    candidates: usize,
    /// Print only this formula.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Draft time for one sequence.
    #[arg(long)]
    mp: Option<f64>,
    /// Target time for one sequence.
    #[arg(long)]
    mq: Option<f64>,
    /// Scoring time for all candidates.
    #[arg(long, default_value_t = 0.0)]
    mk: f64,
}

#[derive(Serialize)]
struct Row {
    mode: SpeedupMode,
    ce: f64,
    speedup: f64,
}

fn ce_for(a: &SpeedupArgs, mode: SpeedupMode) -> Result<f64, CliError> {
    match (a.ce, a.mp, a.mq) {
        (Some(ce), _, _) => Ok(ce),
        (None, Some(mp), Some(mq)) if mq > 0.0 => Ok(match mode {
            SpeedupMode::Vanilla => mp / mq,
            SpeedupMode::Batch | SpeedupMode::Serial => (a.xi * mp + a.mk) / mq,
        }),
        _ => Err(CliError::Usage("give --ce, or --mp and a positive --mq".into())),
    }
}

pub fn run(a: SpeedupArgs, json: bool) -> Result<(), CliError> {
    let modes: Vec<SpeedupMode> = match a.mode {
        Some(m) => vec![m.into()],
        None => vec![SpeedupMode::Vanilla, SpeedupMode::Batch, SpeedupMode::Serial],
    };
    let mut rows = Vec::new();
    for mode in modes {
        let ce = ce_for(&a, mode)?;
        let p = SpeedupParams { alpha: a.alpha, gamma: a.gamma, candidates: a.candidates, ce, xi: a.xi };
        p.validate()?;
        rows.push(Row { mode, ce, speedup: speedup(&p, mode) });
    }
    emit(json, &rows, || {
        rows.iter()
            .map(|r| format!("{:<8} {}", format!("{:?}", r.mode).to_lowercase(), r.speedup))
            .collect::<Vec<_>>()
            .join("\n")
    })
}
