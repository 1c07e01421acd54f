use std::fs;
use std::path::Path;

use dnls::bench::{run_bench, BenchConfig};
use dnls::imaging::{
    dice_multilabel, generate_phantom, overlay_labels, overlay_mask, read_pgm, write_pgm, LabelMatching,
    ObjectShape, PhantomSpec,
};
use dnls::multiphase::deformation_energy;
use dnls::{
    segment_multiphase, segment_two_phase, EvolutionConfig, InitStrategy, LabelMap, Mask, ModelConfig,
    MultiphaseConfig, Polarity,
};

use crate::report::{energy_csv, Artifacts, RunConfig, RunMetrics, RunReport, REPORT_SCHEMA};
use crate::{
    BenchArgs, CliError, DiceArgs, EvolutionArgs, InitArg, MatchArg, ModelArgs, PhantomArgs, PolarityArg,
    RunArgs, Segment2Args, SegmentMultiArgs, ShapeArg,
};

/// Grid spacing, in pixels, behind the default polytope count.
const DEFAULT_SPACING: f64 = 20.0;

fn default_polytopes((height, width): (usize, usize)) -> usize {
    let cells = |side: usize| ((side as f64 / DEFAULT_SPACING).round() as usize).max(1);
    cells(width) * cells(height)
}

fn model_config(a: &ModelArgs, shape: (usize, usize)) -> ModelConfig {
    ModelConfig {
        n_polytopes: a.n.unwrap_or_else(|| default_polytopes(shape)),
        m_halfspaces: a.m,
        steepness: a.steepness,
        neighbor_cells: a.neighbor_cells,
        ..ModelConfig::default()
    }
}

fn evolution_config(a: &EvolutionArgs, base: EvolutionConfig) -> EvolutionConfig {
    EvolutionConfig {
        max_iters: a.iters.unwrap_or(base.max_iters),
        gamma0: a.gamma0.unwrap_or(base.gamma0),
        gamma_decay: a.gamma_decay.unwrap_or(base.gamma_decay),
        energy_tol: a.tol.unwrap_or(base.energy_tol),
        ..base
    }
}

fn init_strategy(a: InitArg) -> InitStrategy {
    match a {
        InitArg::GridKmeans => InitStrategy::GridKmeans,
        InitArg::MultiOtsu => InitStrategy::MultiOtsu,
        InitArg::Random => InitStrategy::Random,
    }
}

fn replayed(path: &Path, subcommand: &str) -> Result<RunConfig, CliError> {
    let report = RunReport::read(path)?;
    if report.subcommand != subcommand {
        return Err(CliError::Usage(format!(
            "{} records a {} run, not {subcommand}",
            path.display(),
            report.subcommand
        )));
    }
    Ok(report.config)
}

/// Resolves the run configuration from flags, or from a report when replaying.
fn resolve(
    run: &RunArgs,
    subcommand: &str,
    threads: usize,
    build: impl FnOnce(&RunArgs, (usize, usize)) -> Result<RunConfig, CliError>,
) -> Result<(RunConfig, dnls::GrayImage), CliError> {
    if let Some(path) = &run.replay {
        let mut config = replayed(path, subcommand)?;
        config.threads = threads;
        let image = read_pgm(&config.input)?;
        return Ok((config, image));
    }
    let input = run.input.as_ref().expect("clap requires --in without --replay");
    let image = read_pgm(input)?;
    let config = build(run, image.shape())?;
    Ok((config, image))
}

fn not_converged_warning(evo: &EvolutionConfig, converged: bool, iterations: usize) -> Option<String> {
    (!converged && evo.energy_tol > 0.0 && iterations > 0).then(|| {
        format!(
            "energy did not settle to tolerance {:e} within {} iterations",
            evo.energy_tol, evo.max_iters
        )
    })
}

fn finish(mut report: RunReport, mut artifacts: Artifacts) -> Result<(), CliError> {
    let json = artifacts.path("report.json");
    let csv = artifacts.path("report.csv");
    report.artifacts = artifacts.written.clone();
    fs::write(&json, report.to_json()).map_err(|e| CliError::io(&json, e))?;
    let row = report.to_csv();
    fs::write(&csv, &row).map_err(|e| CliError::io(&csv, e))?;
    for w in &report.warnings {
        eprintln!("dnls: warning: {w}");
    }
    print!("{row}");
    Ok(())
}

pub fn segment2(a: Segment2Args, command: Vec<String>, threads: usize) -> Result<(), CliError> {
    let polarity = match a.polarity {
        PolarityArg::Auto => Polarity::Auto,
        PolarityArg::Bright => Polarity::Bright,
        PolarityArg::Dark => Polarity::Dark,
    };
    let (config, image) = resolve(&a.run, "segment2", threads, |run, shape| {
        Ok(RunConfig {
            input: run.input.clone().expect("checked"),
            truth: run.truth.clone(),
            model: model_config(&run.model, shape),
            evolution: EvolutionConfig {
                polarity,
                ..evolution_config(&run.evolution, EvolutionConfig::two_phase())
            },
            multiphase: None,
            threads,
        })
    })?;
    let truth = config
        .truth
        .as_ref()
        .map(|p| read_pgm(p).map(|t| Mask::from_image(&t)))
        .transpose()?;
    let mut artifacts = Artifacts::new(&a.run.out)?;

    let result = segment_two_phase(&image, &config.model, &config.evolution)?;
    let dice = truth.as_ref().map(|t| dnls::imaging::dice(&result.mask, t)).transpose()?;

    write_pgm(artifacts.path("mask.pgm"), &result.mask.to_image())?;
    write_pgm(artifacts.path("overlay.pgm"), &overlay_mask(&image, &result.mask)?)?;
    artifacts.write("energy.csv", &energy_csv(&result.energy_trace))?;
    artifacts.write("model.json", &result.model.to_json()?)?;

    let warnings = not_converged_warning(&config.evolution, result.converged, result.iterations_run)
        .into_iter()
        .collect();
    let report = RunReport {
        schema: REPORT_SCHEMA,
        command,
        subcommand: "segment2".into(),
        metrics: RunMetrics {
            iterations: result.iterations_run,
            wall_time: result.wall_time,
            final_energy: result.final_energy,
            converged: result.converged,
            dice,
            per_region_dice: None,
        },
        config,
        warnings,
        artifacts: Vec::new(),
    };
    finish(report, artifacts)
}

pub fn segment_multi(a: SegmentMultiArgs, command: Vec<String>, threads: usize) -> Result<(), CliError> {
    let (config, image) = resolve(&a.run, "segmentmulti", threads, |run, shape| {
        let mp = MultiphaseConfig {
            n_regions: a.r.expect("clap requires --r without --replay"),
            relabel_every: a.relabel_every,
            init: init_strategy(a.init),
            seed: a.seed,
        };
        mp.validate()?;
        Ok(RunConfig {
            input: run.input.clone().expect("checked"),
            truth: run.truth.clone(),
            model: model_config(&run.model, shape),
            evolution: evolution_config(&run.evolution, EvolutionConfig::multiphase()),
            multiphase: Some(mp),
            threads,
        })
    })?;
    let mp = config
        .multiphase
        .clone()
        .ok_or_else(|| CliError::Usage("report has no multiphase configuration".into()))?;
    let truth = config
        .truth
        .as_ref()
        .map(|p| read_pgm(p).map(|t| LabelMap::from_image(&t)))
        .transpose()?;
    let mut artifacts = Artifacts::new(&a.run.out)?;

    let result = segment_multiphase(&image, &config.model, &config.evolution, &mp)?;
    let final_energy = deformation_energy(&image, &result.model, &result.regions)?;
    let score = truth
        .as_ref()
        .map(|t| dice_multilabel(&result.label_map, t, LabelMatching::HungarianGreedy))
        .transpose()?;

    write_pgm(artifacts.path("labels.pgm"), &result.label_map.to_image())?;
    write_pgm(artifacts.path("overlay.pgm"), &overlay_labels(&image, &result.label_map)?)?;
    artifacts.write("energy.csv", &energy_csv(&result.energy_trace))?;
    artifacts.write("model.json", &result.model.to_json()?)?;

    let warnings = not_converged_warning(&config.evolution, result.converged, result.iterations_run)
        .into_iter()
        .collect();
    let report = RunReport {
        schema: REPORT_SCHEMA,
        command,
        subcommand: "segmentmulti".into(),
        metrics: RunMetrics {
            iterations: result.iterations_run,
            wall_time: result.wall_time,
            final_energy,
            converged: result.converged,
            dice: score.as_ref().map(|s| s.mean),
            per_region_dice: score.map(|s| s.per_region),
        },
        config,
        warnings,
        artifacts: Vec::new(),
    };
    finish(report, artifacts)
}

pub fn phantom(a: PhantomArgs) -> Result<(), CliError> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => PhantomSpec::default(),
    };
    if let Some(v) = a.objects {
        spec.objects = v;
    }
    if let Some(v) = a.size {
        spec.width = v;
        spec.height = v;
    }
    if let Some(v) = a.noise {
        spec.noise_sigma = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.fill {
        spec.fill = v;
    }
    if let Some(v) = a.shape {
        spec.shape = match v {
            ShapeArg::Disk => ObjectShape::Disk,
            ShapeArg::Square => ObjectShape::Square,
            ShapeArg::Annulus => ObjectShape::Annulus,
        };
    }
    let (image, truth) = generate_phantom(&spec)?;
    let mut artifacts = Artifacts::new(&a.out)?;
    let image_path = artifacts.path("image.pgm");
    write_pgm(&image_path, &image)?;
    let truth_path = artifacts.path("truth.pgm");
    write_pgm(&truth_path, &truth.to_image())?;
    artifacts.write("spec.json", &serde_json::to_string_pretty(&spec).expect("spec serializes"))?;
    println!("{}", image_path.display());
    println!("{}", truth_path.display());
    Ok(())
}

pub fn dice(a: DiceArgs) -> Result<(), CliError> {
    let pred = read_pgm(&a.a)?;
    let truth = read_pgm(&a.b)?;
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["schema", "label", "matched", "dice"])
        .map_err(|e| CliError::Io(format!("stdout: {e}")))?;
    let mut emit = |label: &str, matched: String, value: f64| {
        w.write_record([REPORT_SCHEMA.to_string(), label.to_string(), matched, format!("{value:.6}")])
            .map_err(|e| CliError::Io(format!("stdout: {e}")))
    };
    if a.multilabel {
        let matching = match a.matching {
            MatchArg::Greedy => LabelMatching::HungarianGreedy,
            MatchArg::Fixed => LabelMatching::Fixed,
        };
        let score = dice_multilabel(&LabelMap::from_image(&pred), &LabelMap::from_image(&truth), matching)?;
        for ((label, matched), d) in score.labels.iter().zip(&score.matched).zip(&score.per_region) {
            emit(&label.to_string(), matched.map(|m| m.to_string()).unwrap_or_default(), *d)?;
        }
        emit("mean", String::new(), score.mean)?;
    } else {
        let d = dnls::imaging::dice(&Mask::from_image(&pred), &Mask::from_image(&truth))?;
        emit("foreground", String::new(), d)?;
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<(), CliError> {
    let defaults = BenchConfig::default();
    let model = ModelConfig {
        n_polytopes: a.model.n.unwrap_or_else(|| default_polytopes((a.size, a.size))),
        ..model_config(&a.model, (a.size, a.size))
    };
    let cfg = BenchConfig {
        objects: a.objects,
        size: a.size,
        noise_sigma: a.noise,
        seed: a.seed,
        model,
        evolution: evolution_config(&a.evolution, defaults.evolution.clone()),
        init: init_strategy(a.init),
        relabel_every: a.relabel_every,
        ..defaults
    };
    let report = run_bench(&cfg)?;
    let mut artifacts = Artifacts::new(&a.out)?;
    let csv = report.to_csv();
    artifacts.write("bench.csv", &csv)?;
    let doc = serde_json::json!({
        "schema": REPORT_SCHEMA,
        "config": cfg,
        "report": report,
    });
    artifacts.write("bench.json", &serde_json::to_string_pretty(&doc).expect("report serializes"))?;
    print!("{csv}");
    eprintln!(
        "time ratio {:.3}, memory ratio {}",
        report.time_ratio,
        report.memory_ratio.map(|r| format!("{r:.3}")).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}
