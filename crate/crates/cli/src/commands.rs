use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use edgesense::config::KvConfig;
use edgesense::openworld::{
    extract_features, features_csv, increments_csv, run_open_world, EvmModel, EvmParams,
    OpenWorldSpec,
};
use edgesense::sched::{
    clpa_assignment, min_interval_assign, qlbs_train, Policy, QTable, RewardWeights, TrainConfig,
    TrainMode,
};
use edgesense::sim::{
    compare_policies, evaluate, metrics_csv, schedule, Classifier, WindowClassifier,
};
use edgesense::trace::{
    class_window, complete_durations, generate_trace, ClassCatalog, ClassId, EventTrace,
    TraceProfile, WindowConfig,
};
use edgesense::updater::{run_update_case_study, update_log_csv, TrainCostModel, UpdateRequest};

use crate::{
    ClassifierArg, Cli, Command, CompareArgs, GenTraceArgs, ModeArg, OpenWorldArgs, ProfileName,
    QlbsArgs, SimulateArgs, TraceArgs, TrainArgs, UpdateArgs,
};

const DEFAULT_LENGTH: u64 = 7000;
const DEFAULT_CL: usize = 9;
const DEFAULT_UPDATE_LENGTH: u64 = 14_000;
const TRAINING_WINDOWS_PER_CLASS: usize = 30;

struct Settings<'a> {
    cfg: KvConfig,
    seed: u64,
    out: &'a Path,
}

impl Settings<'_> {
    /// Flag, then config key, then `default`.
    fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        Ok(self.cfg.get_parsed(key)?.unwrap_or(default))
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
        Ok(path)
    }

    fn profile(&self, name: ProfileName) -> Result<TraceProfile> {
        let base = match name {
            ProfileName::Kitchen => TraceProfile::kitchen(),
        };
        Ok(base.apply_config(&self.cfg)?)
    }

    fn length(&self, flag: Option<u64>, default: u64) -> Result<usize> {
        let len: u64 = self.pick(flag, "length", default)?;
        if len == 0 {
            bail!("length must be >= 1");
        }
        Ok(len as usize)
    }

    fn trace(&self, args: &TraceArgs, default_length: u64) -> Result<(EventTrace, ClassCatalog)> {
        let profile = self.profile(args.profile)?;
        let trace = match &args.trace {
            Some(path) => EventTrace::load(path, Some(profile.num_classes()))?,
            None => generate_trace(
                self.seed,
                self.length(args.length, default_length)?,
                &profile,
            )?,
        };
        let cl = self.pick(args.cl, "cl", DEFAULT_CL)?;
        let catalog = ClassCatalog::uniform(&profile, cl).apply_config(&self.cfg)?;
        Ok((trace, catalog))
    }

    fn train_config(&self, args: &QlbsArgs) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        Ok(TrainConfig {
            episodes: self.pick(args.episodes, "episodes", d.episodes)?,
            epsilon: self.pick(args.epsilon, "epsilon", d.epsilon)?,
            alpha: self.pick(args.alpha, "alpha", d.alpha)?,
            gamma: self.pick(args.gamma, "gamma", d.gamma)?,
            seed: self.seed,
            ..d
        })
    }

    fn weights(&self, args: &QlbsArgs) -> Result<RewardWeights> {
        let cr1 = self.pick(args.cr1.clone(), "cr1", "10/50".to_string())?;
        let cr2 = self.pick(args.cr2.clone(), "cr2", "1/5".to_string())?;
        Ok(RewardWeights::from_ratios(&cr1, &cr2)?)
    }

    fn qtable(
        &self,
        path: Option<&Path>,
        args: &QlbsArgs,
        trace: &EventTrace,
        catalog: &ClassCatalog,
    ) -> Result<QTable> {
        if let Some(p) = path {
            return Ok(QTable::load(p)?);
        }
        let out = qlbs_train(
            trace,
            catalog,
            &self.train_config(args)?,
            &self.weights(args)?,
            None,
        )?;
        Ok(out.table)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::new(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => cfg.get_parsed("seed")?.unwrap_or(0),
    };
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let s = Settings {
        cfg,
        seed,
        out: &cli.out,
    };
    match &cli.command {
        Command::GenTrace(a) => gen_trace(&s, a),
        Command::TrainQlbs(a) => train(&s, a),
        Command::Simulate(a) => simulate(&s, a),
        Command::Compare(a) => compare(&s, a),
        Command::Openworld(a) => openworld(&s, a),
        Command::UpdateExp(a) => update_exp(&s, a),
    }
}

fn gen_trace(s: &Settings, a: &GenTraceArgs) -> Result<()> {
    let profile = s.profile(a.profile)?;
    let trace = generate_trace(s.seed, s.length(a.length, DEFAULT_LENGTH)?, &profile)?;
    s.write("trace.csv", &trace.to_csv())?;
    Ok(())
}

fn train(s: &Settings, a: &TrainArgs) -> Result<()> {
    let (trace, catalog) = s.trace(&a.trace, DEFAULT_LENGTH)?;
    let mode = match a.mode {
        Some(m) => m,
        None => match s.cfg.get("mode") {
            None | Some("full") => ModeArg::Full,
            Some("update") => ModeArg::Update,
            Some(other) => bail!("mode must be full or update, got {other}"),
        },
    };
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        mode: match mode {
            ModeArg::Full => TrainMode::Full,
            ModeArg::Update => TrainMode::Update,
        },
        theta: s.pick(a.theta, "theta", d.theta)?,
        n_success: s.pick(a.n_success, "n_success", d.n_success)?,
        ..s.train_config(&a.qlbs)?
    };
    let init = a.init.as_deref().map(QTable::load).transpose()?;
    let out = qlbs_train(&trace, &catalog, &cfg, &s.weights(&a.qlbs)?, init.as_ref())?;
    s.write("qtable.txt", &out.table.to_text())?;
    s.write("training_curve.csv", &out.curve_csv())?;
    if cfg.mode == TrainMode::Update {
        eprintln!(
            "update stopped after {} episodes (converged: {})",
            out.episodes_run(),
            out.converged
        );
    }
    Ok(())
}

fn build_policy(
    s: &Settings,
    name: &str,
    trace: &EventTrace,
    catalog: &ClassCatalog,
    qlbs: &QlbsArgs,
    qtable: Option<&Path>,
) -> Result<Policy> {
    let durations = complete_durations(trace);
    Ok(match name.trim() {
        "fixed" => Policy::Fixed(1),
        "min" => Policy::MinInterval(min_interval_assign(&durations)),
        "clpa" => Policy::Clpa(clpa_assignment(&durations, catalog)),
        "qlbs" => Policy::Qlbs(s.qtable(qtable, qlbs, trace, catalog)?),
        other => match other.strip_prefix("fixed:").map(str::parse::<usize>) {
            Some(Ok(p)) if p >= 1 => Policy::Fixed(p),
            _ => bail!("unknown policy {other:?}"),
        },
    })
}

fn window_classifier(
    s: &Settings,
    profile: &TraceProfile,
    skip: Option<ClassId>,
) -> Result<EvmModel> {
    let window = WindowConfig::default();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for c in 0..profile.num_classes() as ClassId {
        if Some(c) == skip {
            continue;
        }
        for i in 0..TRAINING_WINDOWS_PER_CLASS {
            let t = usize::MAX / 2 + c as usize * TRAINING_WINDOWS_PER_CLASS + i;
            xs.push(extract_features(&class_window(c, t, s.seed, &window))?.values);
            ys.push(c);
        }
    }
    Ok(EvmModel::fit(
        &xs,
        &ys,
        evm_params(s, None, None, None, None)?,
    )?)
}

fn evm_params(
    s: &Settings,
    tail: Option<usize>,
    cover: Option<f64>,
    mult: Option<f64>,
    delta: Option<f64>,
) -> Result<EvmParams> {
    let d = EvmParams::default();
    Ok(EvmParams {
        tail_size: s.pick(tail, "tail_size", d.tail_size)?,
        cover_threshold: s.pick(cover, "cover_threshold", d.cover_threshold)?,
        distance_multiplier: s.pick(mult, "distance_multiplier", d.distance_multiplier)?,
        rejection_threshold: s.pick(delta, "rejection_threshold", d.rejection_threshold)?,
    })
}

fn simulate(s: &Settings, a: &SimulateArgs) -> Result<()> {
    let (trace, catalog) = s.trace(&a.trace, DEFAULT_LENGTH)?;
    let policy = build_policy(s, &a.policy, &trace, &catalog, &a.qlbs, a.qtable.as_deref())?;
    let classifier = match a.classifier {
        ClassifierArg::Oracle => None,
        ClassifierArg::Openworld => Some(WindowClassifier {
            model: window_classifier(s, &s.profile(a.trace.profile)?, None)?,
            window: WindowConfig::default(),
            seed: s.seed,
        }),
    };
    let decisions = schedule(
        &trace,
        &policy,
        classifier
            .as_ref()
            .map_or(Classifier::Oracle, Classifier::OpenWorld),
        |_| {},
    );
    let m = evaluate(&trace, &decisions, &catalog, policy.name());
    s.write("metrics.csv", &metrics_csv(std::slice::from_ref(&m)))?;
    s.write("transitions.csv", &m.transitions_csv())?;
    Ok(())
}

fn compare(s: &Settings, a: &CompareArgs) -> Result<()> {
    let (trace, catalog) = s.trace(&a.trace, DEFAULT_LENGTH)?;
    let policies = a
        .policies
        .iter()
        .map(|p| build_policy(s, p, &trace, &catalog, &a.qlbs, a.qtable.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let jobs = s.pick(a.jobs, "jobs", 1)?;
    let rows = compare_policies(&trace, &policies, &catalog, jobs)?;
    s.write("metrics.csv", &metrics_csv(&rows))?;
    for m in &rows {
        s.write(
            &format!("transitions_{}.csv", m.policy),
            &m.transitions_csv(),
        )?;
    }
    Ok(())
}

fn openworld(s: &Settings, a: &OpenWorldArgs) -> Result<()> {
    let d = OpenWorldSpec::default();
    let spec = OpenWorldSpec {
        dim: s.pick(a.dim, "dim", d.dim)?,
        initial_classes: s.pick(a.known, "known", d.initial_classes)?,
        increments: s.pick(a.increments, "increments", d.increments)?,
        classes_per_increment: s.pick(a.per_increment, "per_increment", d.classes_per_increment)?,
        train_per_class: s.pick(a.train_per_class, "train_per_class", d.train_per_class)?,
        test_per_class: s.pick(a.test_per_class, "test_per_class", d.test_per_class)?,
        min_samples: s.pick(a.min_samples, "min_samples", d.min_samples)?,
        params: evm_params(
            s,
            a.tail_size,
            a.cover_threshold,
            a.distance_multiplier,
            a.rejection_threshold,
        )?,
        seed: s.seed,
        ..d
    };
    let run = run_open_world(&spec)?;
    s.write("owm.csv", &increments_csv(&run.rows))?;
    let labels: Vec<Option<ClassId>> = run.train_labels.iter().copied().map(Some).collect();
    s.write("features.csv", &features_csv(&run.train_features, &labels))?;
    s.write("evm_model.txt", &run.model.to_text())?;
    Ok(())
}

fn update_exp(s: &Settings, a: &UpdateArgs) -> Result<()> {
    let (trace, catalog) = s.trace(&a.trace, DEFAULT_UPDATE_LENGTH)?;
    let profile = s.profile(a.trace.profile)?;
    let class: ClassId = s.pick(a.class, "class", (profile.num_classes() - 1) as ClassId)?;
    if class as usize >= profile.num_classes() {
        bail!("class {class} outside the profile");
    }
    let queue_len = s.pick(a.queue, "queue", 100)?;
    let period = s.pick(a.period, "period", 33)?;
    if period < 1 {
        bail!("period must be >= 1");
    }

    let model = window_classifier(s, &profile, Some(class))?;
    let window = WindowConfig::default();
    let queue = (0..queue_len)
        .map(|i| {
            Ok(extract_features(&class_window(class, usize::MAX / 4 + i, s.seed, &window))?.values)
        })
        .collect::<Result<Vec<_>>>()?;
    let label = profile.num_classes() as ClassId;
    let cost = if a.calibrate {
        TrainCostModel::calibrate(&model, &queue[..queue.len().min(5)], label)?
    } else {
        TrainCostModel::linear(s.pick(a.cost_per_sample, "cost_per_sample", 31.0)?)?
    };

    let mut assignment = clpa_assignment(&complete_durations(&trace), &catalog);
    assignment.set(class, period);
    s.write("clpa_assignment.csv", &assignment.to_csv())?;
    let req = UpdateRequest::classifier(queue, label);
    let study = run_update_case_study(&trace, &Policy::Clpa(assignment), model, req, &cost)?;
    s.write("update_log.csv", &update_log_csv(&study.log))?;
    s.write("evm_model.txt", &study.model.to_text())?;
    match study.drained_at {
        Some(t) => eprintln!("queue drained in the idle window after t={t}"),
        None => eprintln!(
            "{} samples still queued at the end of the trace",
            study.remaining.len()
        ),
    }
    Ok(())
}
