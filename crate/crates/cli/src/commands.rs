use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use mgtnet::data::SYNTH_UNIT;
use mgtnet::gradcheck::grad_check_many;
use mgtnet::layers::GraphConvKind;
use mgtnet::metrics::{EvalOptions, MetricReport};
use mgtnet::skeleton::{hop_distances, sparsity_report, symmetric_eigen_range, DisentangledAdjacencySet};
use mgtnet::training::{elastic_loss_with, train_with, HistoryRow};
use mgtnet::{
    synthesize, Bindings, Checkpoint, ForwardMode, History, MgtNet, PoseDataset, SkeletonGraph, Standardizer,
    SynthConfig, Tensor,
};

use crate::config::RunConfig;
use crate::{Axis, CheckFailed};

const GRADCHECK_SAMPLES: usize = 2;
const ABLATION_FRAMES: [usize; 6] = [1, 3, 9, 27, 81, 243];
/// Sequence length of the synthetic dataset used by `ablate --axis frames`
/// when no data file is given.
const ABLATION_SYNTH_FRAMES: usize = 27;

fn load_skeleton(spec: &str) -> Result<SkeletonGraph> {
    let path = Path::new(spec);
    if path.exists() {
        SkeletonGraph::load(path).with_context(|| format!("loading skeleton {spec}"))
    } else {
        SkeletonGraph::builtin(spec).with_context(|| format!("`{spec}` is neither a file nor a built-in skeleton"))
    }
}

fn load_data(path: &Path) -> Result<PoseDataset> {
    PoseDataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

/// Emits `csv` on stdout and `table` on stderr in CSV mode, else the table on stdout.
fn emit(csv_mode: bool, csv: &str, table: &str) {
    if csv_mode {
        print!("{csv}");
        eprint!("{table}");
    } else {
        print!("{table}");
    }
}

/// Fits the standardizer on `ds` when enabled and returns the network input.
fn prepare(ds: &PoseDataset, standardize: bool) -> Result<(PoseDataset, Option<Standardizer>)> {
    if !standardize {
        return Ok((ds.clone(), None));
    }
    let s = Standardizer::fit(ds)?;
    Ok((s.apply(ds)?, Some(s)))
}

fn check_frames(cfg: &RunConfig, ds: &PoseDataset) -> Result<()> {
    ensure!(
        ds.frames() == cfg.model.frames,
        "dataset has T={} frames but the config expects T={}",
        ds.frames(),
        cfg.model.frames
    );
    Ok(())
}

fn history_line(r: &HistoryRow) -> String {
    format!("{},{},{},{},{}", r.epoch, r.lr, r.train_loss, r.eval_mpjpe, r.eval_pa_mpjpe)
}

fn history_table_line(r: &HistoryRow) -> String {
    format!(
        "epoch {:>4}  lr {:.6}  loss {:.6}  mpjpe {:.6}  pa-mpjpe {:.6}",
        r.epoch, r.lr, r.train_loss, r.eval_mpjpe, r.eval_pa_mpjpe
    )
}

pub fn train(
    config: Option<&Path>,
    data: &Path,
    out: &Path,
    seed: Option<u64>,
    preset: Option<&str>,
    csv: bool,
) -> Result<()> {
    let mut cfg = RunConfig::from_args(config, preset, seed)?;
    let ds = load_data(data)?;
    ensure!(!ds.is_empty(), "dataset {} is empty", data.display());
    cfg.model.joints = ds.joints();
    cfg.data = Some(data.to_path_buf());
    cfg.out = Some(out.to_path_buf());
    check_frames(&cfg, &ds)?;
    let (input, standardizer) = prepare(&ds, cfg.standardize)?;
    let mut net = MgtNet::new(cfg.model.clone(), ds.skeleton(), cfg.train.seed)?;
    log::info!(
        "training {} parameters on {} samples (preset {})",
        net.param_count(),
        ds.len(),
        cfg.preset
    );
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    if csv {
        println!("{}", History::CSV_HEADER);
    }
    let history = train_with(&mut net, &input, None, &cfg.train, |row| {
        if csv {
            println!("{}", history_line(row));
            eprintln!("{}", history_table_line(row));
        } else {
            println!("{}", history_table_line(row));
        }
    })?;

    let ck = Checkpoint::new(net, ds.unit(), standardizer);
    ck.save(&out.join("model.mgtc"))?;
    fs::write(out.join("history.csv"), history.to_csv()).context("writing history.csv")?;
    fs::write(out.join("config.toml"), cfg.to_toml()).context("writing config.toml")?;
    log::info!("wrote model.mgtc, history.csv and config.toml to {}", out.display());
    Ok(())
}

pub fn eval(checkpoint: &Path, data: &Path, csv: bool, dump_poses: Option<&Path>) -> Result<()> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let ds = load_data(data)?;
    ensure!(!ds.is_empty(), "dataset {} is empty", data.display());
    let mc = ck.net.config();
    ensure!(
        ds.joints() == mc.joints && ds.frames() == mc.frames,
        "dataset has N={}, T={} but the checkpoint expects N={}, T={}",
        ds.joints(),
        ds.frames(),
        mc.joints,
        mc.frames
    );
    if ds.unit() != ck.unit {
        log::warn!("dataset unit `{}` differs from the training unit `{}`", ds.unit(), ck.unit);
    }
    let preds = ds
        .samples()
        .iter()
        .map(|s| ck.predict(&s.input))
        .collect::<Result<Vec<_>, _>>()?;
    let targets = ds.targets();
    let report = MetricReport::compute(
        &preds,
        &targets,
        &ds.actions(),
        ds.unit(),
        &EvalOptions::for_unit(ds.unit()),
    )?;
    emit(csv, &report.to_csv(), &report.to_table());

    if let Some(path) = dump_poses {
        let names = ds.skeleton().joint_names();
        let mut text = String::from("sample,action,joint,pred_x,pred_y,pred_z,gt_x,gt_y,gt_z\n");
        for (i, ((p, g), s)) in preds.iter().zip(&targets).zip(ds.samples()).enumerate() {
            for (j, name) in names.iter().enumerate() {
                let (p, g) = (&p.data()[j * 3..j * 3 + 3], &g.data()[j * 3..j * 3 + 3]);
                let _ = writeln!(
                    text,
                    "{i},{},{name},{},{},{},{},{},{}",
                    s.action, p[0], p[1], p[2], g[0], g[1], g[2]
                );
            }
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn graph(skeleton: &str, k_max: usize, csv: bool) -> Result<()> {
    let g = load_skeleton(skeleton)?;
    g.ensure_connected()?;
    ensure!(k_max >= 1, "--k-max must be at least 1");
    let d = hop_distances(&g);
    let set = DisentangledAdjacencySet::new(&g, k_max);
    let mut table = format!("hop distances ({} joints):\n", g.num_joints());
    for (name, row) in g.joint_names().iter().zip(d.to_string().lines()) {
        let _ = writeln!(table, "{name:>12} {row}");
    }
    let _ = writeln!(
        table,
        "max hop from root `{}`: {}\n",
        g.joint_names()[g.root()],
        d.eccentricity(g.root())
    );
    let _ = writeln!(
        table,
        "{:>3}  {:>10}  {:>10}  {:>10}  {:>10}",
        "k", "nnz(A_k)", "nnz(A^k)", "eig_min", "eig_max"
    );
    let mut out = String::from("k,k_adjacency_nnz,power_nnz,eig_min,eig_max\n");
    for row in sparsity_report(&g, k_max) {
        let (lo, hi) = symmetric_eigen_range(&set.normalized()[row.k]);
        let _ = writeln!(out, "{},{},{},{},{}", row.k, row.k_adjacency_nnz, row.power_nnz, lo, hi);
        let _ = writeln!(
            table,
            "{:>3}  {:>10}  {:>10}  {:>10.4}  {:>10.4}",
            row.k, row.k_adjacency_nnz, row.power_nnz, lo, hi
        );
    }
    emit(csv, &out, &table);
    Ok(())
}

/// Scalar function whose parameter gradient is checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum GradcheckObjective {
    /// Inner product of the network outputs with the ground-truth poses.
    Output,
    /// The training loss. Its value is dominated by the targets, so the
    /// finite-difference round-off is larger relative to small gradients.
    Loss,
}

pub struct GradcheckOptions {
    pub objective: GradcheckObjective,
    pub tolerance: f64,
    pub step: f64,
    pub max_params: usize,
    pub corrupt_backward: bool,
    pub csv: bool,
}

#[derive(Default)]
struct GroupResult {
    params: usize,
    max_rel_error: f64,
    worst: String,
    analytic: f64,
    numeric: f64,
}

/// Parameter group of a dotted parameter name: the owning layer, i.e. the
/// name without its trailing index segments and final field.
fn group_of(name: &str) -> &str {
    let mut head = name;
    while let Some((rest, last)) = head.rsplit_once('.') {
        if !last.bytes().all(|b| b.is_ascii_digit()) {
            break;
        }
        head = rest;
    }
    head.rsplit_once('.').map_or(head, |(g, _)| g)
}

pub fn gradcheck(config: Option<&Path>, preset: Option<&str>, seed: Option<u64>, opts: &GradcheckOptions) -> Result<()> {
    ensure!(
        opts.tolerance.is_finite() && opts.tolerance > 0.0,
        "--tolerance must be positive, got {}",
        opts.tolerance
    );
    let cfg = RunConfig::from_args(config, preset, seed)?;
    let skeleton = SkeletonGraph::human36m();
    let mut model = cfg.model.clone();
    model.joints = skeleton.num_joints();
    let net = MgtNet::new(model, &skeleton, cfg.train.seed)?;
    let scalars = net.params().num_scalars();
    ensure!(
        scalars <= opts.max_params,
        "model has {scalars} parameters, more than the finite-difference limit of {} (use a smaller config or raise --max-params)",
        opts.max_params
    );
    let ds = synthesize(
        &skeleton,
        &SynthConfig {
            count: GRADCHECK_SAMPLES,
            frames: cfg.model.frames,
            seed: cfg.train.seed,
            ..SynthConfig::default()
        },
    );
    let (ds, _) = prepare(&ds, cfg.standardize)?;
    let target = Tensor::new(
        &[ds.len(), ds.joints(), 3],
        ds.targets().iter().flat_map(|t| t.data().to_vec()).collect(),
    )?;
    let (alpha, reduction) = (cfg.train.alpha, cfg.train.reduction);
    let corrupt = opts.corrupt_backward;
    let objective = opts.objective;

    let reports = grad_check_many(
        |tape, vars| {
            let bindings = Bindings::from_vars(vars.to_vec());
            let preds = ds
                .samples()
                .iter()
                .map(|s| {
                    net.forward(tape, &bindings, &s.input, &mut ForwardMode::Eval)
                        .map_err(|e| mgtnet::TensorError::Evaluation(e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut pred = tape.stack(&preds)?;
            if corrupt {
                pred = tape.map(pred, |x| x, |_| 2.0);
            }
            let t = tape.constant(target.clone());
            match objective {
                GradcheckObjective::Output => {
                    let m = tape.mul(pred, t)?;
                    Ok(tape.sum(m))
                }
                GradcheckObjective::Loss => elastic_loss_with(tape, pred, t, alpha, reduction),
            }
        },
        net.params().tensors(),
        opts.step,
        opts.tolerance,
    )?;

    let mut groups: BTreeMap<&str, GroupResult> = BTreeMap::new();
    for ((name, t), r) in net.params().iter().zip(&reports) {
        let entry = groups.entry(group_of(name)).or_default();
        entry.params += t.numel();
        if r.max_rel_error >= entry.max_rel_error {
            entry.max_rel_error = r.max_rel_error;
            entry.worst = format!("{name}[{}]", r.worst);
            entry.analytic = r.analytic[r.worst];
            entry.numeric = r.numeric[r.worst];
        }
    }
    let width = groups.keys().map(|g| g.len()).max().unwrap_or(5).max(5);
    let mut table = format!(
        "{:<width$}  {:>7}  {:>12}  worst element (analytic, numeric)\n",
        "group", "params", "max_rel_err"
    );
    let mut out = String::from("group,params,max_rel_error,worst,analytic,numeric,passed\n");
    for (g, r) in &groups {
        let passed = r.max_rel_error < opts.tolerance;
        let _ = writeln!(
            out,
            "{g},{},{},{},{},{},{passed}",
            r.params, r.max_rel_error, r.worst, r.analytic, r.numeric
        );
        let _ = writeln!(
            table,
            "{g:<width$}  {:>7}  {:>12.3e}  {} ({:.6e}, {:.6e}){}",
            r.params,
            r.max_rel_error,
            r.worst,
            r.analytic,
            r.numeric,
            if passed { "" } else { "  FAIL" }
        );
    }
    let (worst_group, worst) = groups
        .iter()
        .max_by(|a, b| a.1.max_rel_error.total_cmp(&b.1.max_rel_error))
        .ok_or_else(|| anyhow!("model has no parameters"))?;
    let (worst_err, worst_elem) = (worst.max_rel_error, &worst.worst);
    let _ = writeln!(
        table,
        "{scalars} parameters checked, worst relative error {worst_err:.3e} in {worst_elem}, tolerance {:e}",
        opts.tolerance
    );
    emit(opts.csv, &out, &table);
    if worst_err >= opts.tolerance {
        return Err(CheckFailed(format!(
            "gradient check failed: group `{worst_group}` has relative error {worst_err:.3e} at {worst_elem} (tolerance {:e})",
            opts.tolerance
        ))
        .into());
    }
    Ok(())
}

fn variants(axis: Axis, base: &RunConfig, max_frames: usize) -> Vec<(String, RunConfig)> {
    let with = |label: String, f: &dyn Fn(&mut RunConfig)| {
        let mut cfg = base.clone();
        f(&mut cfg);
        (label, cfg)
    };
    match axis {
        Axis::Hops => (0..=2)
            .map(|k| with(format!("{k}-hop"), &|c| c.model.hops = k))
            .collect(),
        Axis::Frames => ABLATION_FRAMES
            .iter()
            .filter(|&&t| t <= max_frames)
            .map(|&t| with(format!("T={t}"), &|c| c.model.frames = t))
            .collect(),
        Axis::Dcl => vec![
            with("with DCL".into(), &|c| c.model.use_dcl = true),
            with("w/o DCL".into(), &|c| c.model.use_dcl = false),
        ],
        Axis::Highorder => vec![
            with("multi-hop".into(), &|c| c.model.graph_conv = GraphConvKind::MultiHop),
            with("high-order".into(), &|c| c.model.graph_conv = GraphConvKind::HighOrder),
        ],
    }
}

pub fn ablate(
    axis: Axis,
    data: Option<&Path>,
    config: Option<&Path>,
    preset: Option<&str>,
    seed: Option<u64>,
    csv: bool,
) -> Result<()> {
    let mut base = RunConfig::from_args(config, preset, seed)?;
    let ds = match data {
        Some(p) => load_data(p)?,
        None => {
            let frames = if axis == Axis::Frames {
                ABLATION_SYNTH_FRAMES
            } else {
                base.model.frames
            };
            synthesize(
                &SkeletonGraph::human36m(),
                &SynthConfig {
                    frames,
                    seed: base.train.seed,
                    ..SynthConfig::default()
                },
            )
        }
    };
    ensure!(!ds.is_empty(), "dataset is empty");
    base.model.joints = ds.joints();
    if axis != Axis::Frames {
        check_frames(&base, &ds)?;
    }
    let runs = variants(axis, &base, ds.frames());
    if runs.is_empty() {
        bail!("no frame count in {ABLATION_FRAMES:?} fits a dataset with T={}", ds.frames());
    }

    let mut out = String::from("variant,params,final_loss,mpjpe\n");
    let mut table = format!(
        "{:<12}  {:>9}  {:>12}  {:>12}\n",
        "variant",
        "params",
        "final loss",
        format!("MPJPE ({})", ds.unit())
    );
    for (label, cfg) in runs {
        let data = if cfg.model.frames == ds.frames() {
            ds.clone()
        } else {
            ds.last_frames(cfg.model.frames)?
        };
        let (input, _) = prepare(&data, cfg.standardize)?;
        let mut net = MgtNet::new(cfg.model.clone(), data.skeleton(), cfg.train.seed)?;
        let history = train_with(&mut net, &input, None, &cfg.train, |row| {
            log::debug!("{label}: {}", history_table_line(row));
        })
        .with_context(|| format!("training variant {label}"))?;
        let last = history.last().ok_or_else(|| anyhow!("no epochs were run"))?;
        let params = net.param_count();
        let _ = writeln!(out, "{label},{params},{},{}", last.train_loss, last.eval_mpjpe);
        let _ = writeln!(
            table,
            "{label:<12}  {params:>9}  {:>12.6}  {:>12.6}",
            last.train_loss, last.eval_mpjpe
        );
        log::info!("{label}: final loss {}, MPJPE {}", last.train_loss, last.eval_mpjpe);
    }
    emit(csv, &out, &table);
    Ok(())
}

pub fn synth(
    out: &Path,
    count: usize,
    frames: usize,
    seed: u64,
    noise: f64,
    amplitude: f64,
    skeleton: &str,
) -> Result<()> {
    ensure!(count > 0, "--count must be positive");
    ensure!(frames > 0, "--frames must be positive");
    ensure!(noise.is_finite() && noise >= 0.0, "--noise must be a non-negative number");
    ensure!(amplitude.is_finite(), "--amplitude must be finite");
    let g = load_skeleton(skeleton)?;
    let ds = synthesize(
        &g,
        &SynthConfig {
            count,
            frames,
            seed,
            noise_sigma: noise,
            amplitude,
        },
    );
    ds.save(out)?;
    eprintln!(
        "wrote {} samples of {} joints x {} frames ({}) to {}",
        ds.len(),
        ds.joints(),
        ds.frames(),
        SYNTH_UNIT,
        out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_are_owning_layers() {
        assert_eq!(group_of("head.weight.0"), "head");
        assert_eq!(group_of("head.bias"), "head");
        assert_eq!(group_of("blocks.0.attention.msa.head.1.key"), "blocks.0.attention.msa.head.1");
        assert_eq!(group_of("blocks.1.hop.0.dcl.kernel"), "blocks.1.hop.0.dcl");
        assert_eq!(group_of("scalar"), "scalar");
    }
}
