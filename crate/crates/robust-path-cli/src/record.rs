//! One solved cell: pipeline dispatch, re-verification, CSV emission.

use std::fmt;
use std::time::Instant;

use anyhow::anyhow;

use robust_path::instance::{brute_force_minimax, path_cost};
use robust_path::metatree::{metatree_moment_report, solve_metatree, DEFAULT_NODE_CAP};
use robust_path::ratio::{format_rat, rat_one};
use robust_path::round::MomentReport;
use robust_path::solver::{flow_baseline, solve_sp, sp_moment_report, SolveOptions};
use robust_path::treewidth::{solve_treewidth, treewidth_moment_report, TwCaps};
use robust_path::{Instance, Rat, StPath};

use crate::CliError;

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Pipeline {
    Sp,
    Treewidth,
    Metatree,
    FlowBaseline,
    Brute,
}

impl Pipeline {
    /// Rounding-based pipelines draw random samples and need a seed.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Pipeline::Sp | Pipeline::Treewidth | Pipeline::Metatree)
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::Sp => "sp",
            Pipeline::Treewidth => "treewidth",
            Pipeline::Metatree => "metatree",
            Pipeline::FlowBaseline => "flow-baseline",
            Pipeline::Brute => "brute",
        })
    }
}

#[derive(Clone, Copy)]
pub struct Caps {
    /// Path-enumeration ceiling for brute-force optima.
    pub enum_cap: usize,
    /// Label-space ceiling for the treewidth pipeline.
    pub space_cap: u128,
    /// Metatree node ceiling.
    pub node_cap: u128,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            enum_cap: 200_000,
            space_cap: TwCaps::default().space,
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

impl Caps {
    pub fn tw_caps(&self) -> TwCaps {
        TwCaps { space: self.space_cap, ..TwCaps::default() }
    }
}

/// A fully verified run. `max_cost` is recomputed from the returned path on
/// the raw instance, never copied from the solver.
pub struct RunRecord {
    pub instance_id: String,
    pub pipeline: Pipeline,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub height: Option<usize>,
    pub gs_star: Option<Rat>,
    pub path: StPath,
    pub agent_costs: Vec<Rat>,
    pub max_cost: Rat,
    pub opt: Option<Rat>,
    pub ratio: Option<Rat>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub tail_freq: Option<f64>,
    pub moment_max: Option<f64>,
    pub wall_ms: u128,
}

pub const CSV_HEADER: &str =
    "instance,pipeline,n,m,k,H,GS_star,max_cost,opt,ratio,trials,seed,tail_freq,moment_max,wall_ms";

fn csv_field(raw: &str) -> String {
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

fn opt_cell<T: ToString>(value: &Option<T>) -> String {
    value.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

impl RunRecord {
    pub fn csv_row(&self) -> String {
        let cells = [
            self.instance_id.clone(),
            self.pipeline.to_string(),
            self.n.to_string(),
            self.m.to_string(),
            self.k.to_string(),
            opt_cell(&self.height),
            self.gs_star.as_ref().map(format_rat).unwrap_or_default(),
            format_rat(&self.max_cost),
            self.opt.as_ref().map(format_rat).unwrap_or_default(),
            self.ratio.as_ref().map(format_rat).unwrap_or_default(),
            opt_cell(&self.trials),
            opt_cell(&self.seed),
            self.tail_freq.map(|v| format!("{v:.6}")).unwrap_or_default(),
            self.moment_max.map(|v| format!("{v:.6}")).unwrap_or_default(),
            self.wall_ms.to_string(),
        ];
        cells.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(",")
    }
}

/// Moment sampling for the pipeline's own rounding stage.
pub fn moment_report_for(
    instance: &Instance,
    pipeline: Pipeline,
    caps: Caps,
    trials: usize,
    seed: u64,
) -> Result<MomentReport, CliError> {
    match pipeline {
        Pipeline::Sp => Ok(sp_moment_report(instance, trials, seed)?),
        Pipeline::Treewidth => {
            Ok(treewidth_moment_report(instance, &caps.tw_caps(), trials, seed)?)
        }
        Pipeline::Metatree => Ok(metatree_moment_report(instance, caps.node_cap, trials, seed)?),
        Pipeline::FlowBaseline | Pipeline::Brute => Err(CliError::usage(anyhow!(
            "the {pipeline} pipeline has no rounding stage to sample"
        ))),
    }
}

pub fn run_one(
    id: &str,
    instance: &Instance,
    pipeline: Pipeline,
    trials: usize,
    seed: Option<u64>,
    caps: Caps,
    with_opt: bool,
    with_moment: bool,
) -> Result<RunRecord, CliError> {
    let opts = SolveOptions { trials, seed: seed.unwrap_or(0) };
    let start = Instant::now();
    // (path, solver's claimed value, gs_star, height, trials, tail_freq)
    let (path, claimed, gs_star, height, trials_out, tail_freq) = match pipeline {
        Pipeline::Sp => {
            let r = solve_sp(instance, &opts)?;
            let tail = r.tail_hits as f64 / r.trials as f64;
            (r.path, r.value, Some(r.gs_star), Some(r.height), Some(r.trials), Some(tail))
        }
        Pipeline::Treewidth => {
            let r = solve_treewidth(instance, &opts, &caps.tw_caps())?;
            let tail = r.tail_hits as f64 / r.trials as f64;
            (r.path, r.value, Some(r.gs_star), Some(r.height), Some(r.trials), Some(tail))
        }
        Pipeline::Metatree => {
            let r = solve_metatree(instance, &opts, caps.node_cap)?;
            let tail = r.tail_hits as f64 / r.trials as f64;
            (r.path, r.value, Some(r.gs_star), Some(r.height), Some(r.trials), Some(tail))
        }
        Pipeline::FlowBaseline => {
            let r = flow_baseline(instance, &opts)?;
            (r.path, r.value, Some(r.gs_star), None, None, None)
        }
        Pipeline::Brute => {
            let r = brute_force_minimax(instance, caps.enum_cap)?;
            let path = r
                .best
                .ok_or_else(|| CliError::failure(anyhow!("no source-sink path exists")))?;
            let value = r.value.expect("a best path carries a value");
            (path, value, None, None, None, None)
        }
    };
    let wall_ms = start.elapsed().as_millis();

    let agent_costs = path_cost(instance, &path);
    let max_cost = agent_costs.iter().max().cloned().expect("at least one agent");
    if max_cost != claimed {
        return Err(CliError::failure(anyhow!(
            "path re-verification failed: solver claimed {}, instance says {}",
            format_rat(&claimed),
            format_rat(&max_cost)
        )));
    }

    let opt = if pipeline == Pipeline::Brute {
        Some(max_cost.clone())
    } else if with_opt {
        brute_force_minimax(instance, caps.enum_cap).ok().and_then(|r| r.value)
    } else {
        None
    };
    let ratio = opt.as_ref().and_then(|o| {
        use num_traits::Zero;
        if o.is_zero() {
            max_cost.is_zero().then(rat_one)
        } else {
            Some(&max_cost / o)
        }
    });

    let moment_max = if with_moment && pipeline.is_stochastic() {
        let report = moment_report_for(
            instance,
            pipeline,
            caps,
            trials,
            seed.expect("stochastic pipelines carry a seed"),
        )?;
        report.moment_means.iter().cloned().fold(None::<f64>, |acc, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        })
    } else {
        None
    };

    Ok(RunRecord {
        instance_id: id.to_string(),
        pipeline,
        n: instance.n(),
        m: instance.m(),
        k: instance.k(),
        height,
        gs_star,
        path,
        agent_costs,
        max_cost,
        opt,
        ratio,
        trials: trials_out,
        seed: pipeline.is_stochastic().then(|| seed.unwrap_or(0)),
        tail_freq,
        moment_max,
        wall_ms,
    })
}
