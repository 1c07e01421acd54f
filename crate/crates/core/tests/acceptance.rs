//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::time::Instant;

use common::{
    fd_gradient, jittered_model, oracle_deformation, oracle_two_phase_energy, random_regions, rel_err,
    rel_err_vec, rng, smooth_phantom, unpruned_regions,
};
use dnls::bench::{run_bench, BenchConfig};
use dnls::imaging::{dice, dice_multilabel, generate_phantom, LabelMatching, ObjectShape, PhantomSpec};
use dnls::memory::TrackingAllocator;
use dnls::multiphase::{
    assign_labels_kmeans, best_region, deformation_gradient, extract_label_map, segment_multiphase_observed,
    wcss, InitStrategy, MultiphaseConfig, PolytopeIntensity,
};
use dnls::twophase::{segment_two_phase_observed, two_phase_gradient, update_region_stats, EvolutionConfig};
use dnls::{GrayImage, LevelSetModel, ModelConfig};
use rand::Rng;

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

const TWO_PHASE_DICE: f64 = 0.985;
const TWO_PHASE_SECONDS: f64 = 5.0;
const POINT_GRADIENT_REL: f64 = 1e-5;
const POINT_GRADIENT_SAMPLES: usize = 100;
const ENERGY_GRADIENT_REL: f64 = 1e-4;
const ORACLE_SECONDS: f64 = 30.0;
const PARTITION_STATES: usize = 1000;
const BENCH_TIME_RATIO: f64 = 1.5;
const BENCH_DICE: f64 = 0.98;
const BENCH_MEMORY_RATIO: f64 = 1.10;
const RANDOM_INIT_DICE: f64 = 0.95;
const OTSU_INIT_DICE: f64 = 0.98;
const RANDOM_INIT_SEEDS: u64 = 5;
const KMEANS_INSTANCES: usize = 100;
const KMEANS_OPTIMAL: usize = 95;

struct Suite {
    failed: usize,
}

impl Suite {
    fn report(&mut self, id: usize, title: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} [{id}] {title}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

/// Models kept for the regularity check: three intermediate iterates and the
/// final one of every run.
#[derive(Default)]
struct Iterates {
    models: Vec<(String, LevelSetModel)>,
}

impl Iterates {
    fn wants(t: usize, max_iters: usize) -> bool {
        [max_iters / 4, max_iters / 2, 3 * max_iters / 4].contains(&t)
    }

    fn keep(&mut self, run: &str, t: usize, m: &LevelSetModel) {
        self.models.push((format!("{run}@{t}"), m.clone()));
    }
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("thread pool")
        .install(f)
}

fn two_phase_accuracy(suite: &mut Suite, iterates: &mut Iterates) {
    let cases = [
        ("disk", ObjectShape::Disk, 0.5, 0.0),
        ("disk-noisy", ObjectShape::Disk, 0.5, 20.0),
        ("annulus", ObjectShape::Annulus, 0.7, 0.0),
        ("annulus-noisy", ObjectShape::Annulus, 0.7, 20.0),
    ];
    let cfg = ModelConfig::default();
    let evo = EvolutionConfig::two_phase();
    let mut ok = cfg.n_polytopes == 100 && cfg.m_halfspaces == 16;
    let mut parts = Vec::new();
    for (name, shape, fill, noise) in cases {
        let spec = PhantomSpec {
            shape,
            fill,
            noise_sigma: noise,
            ..PhantomSpec::default()
        };
        let (image, truth) = generate_phantom(&spec).expect("phantom");
        let truth = truth.mask_of(1);
        let run = single_thread(|| {
            let mut kept = Iterates::default();
            let r = segment_two_phase_observed(&image, &cfg, &evo, &mut |t, m| {
                if Iterates::wants(t, evo.max_iters) {
                    kept.keep(name, t, m);
                }
            });
            (r, kept)
        });
        match run {
            (Ok(r), kept) => {
                iterates.models.extend(kept.models);
                iterates.keep(name, r.iterations_run, &r.model);
                let d = dice(&r.mask, &truth).expect("dice");
                let descended = r.final_energy < r.energy_trace[0];
                ok &= d >= TWO_PHASE_DICE && r.wall_time < TWO_PHASE_SECONDS && descended;
                parts.push(format!("{name} dice={d:.4} t={:.2}s E_T<E_0={descended}", r.wall_time));
            }
            (Err(e), _) => {
                ok = false;
                parts.push(format!("{name} error: {e}"));
            }
        }
    }
    suite.report(
        1,
        "two-phase accuracy (200x200, N=100, M=16, 1 thread)",
        ok,
        format!("{} [need dice>={TWO_PHASE_DICE}, t<{TWO_PHASE_SECONDS}s]", parts.join("; ")),
    );
}

fn gradient_oracles(suite: &mut Suite) {
    let start = Instant::now();
    let mut r = rng(2024);

    // Point gradient of f against central differences.
    let mut samples = 0;
    let mut worst_point: f64 = 0.0;
    let mut attempts = 0;
    while samples < POINT_GRADIENT_SAMPLES && attempts < 50_000 {
        attempts += 1;
        let cfg = ModelConfig {
            n_polytopes: [1, 4, 9, 16][attempts % 4],
            ..ModelConfig::default()
        };
        let m = jittered_model(&cfg, (48, 48), 0.4, &mut r);
        let x = [r.random_range(0.0..47.0), r.random_range(0.0..47.0)];
        let hood = m.neighborhood(x).to_vec();
        let i = hood[r.random_range(0..hood.len())];
        let j = r.random_range(0..m.m_halfspaces());
        let analytic = m.grad_f_wrt_params(x, i, j).expect("in neighborhood");
        // Saturated samples carry no information at round-off level.
        if analytic.iter().all(|v| v.abs() < 1e-4) {
            continue;
        }
        let base = m.params();
        let mut probe = m.clone();
        for k in 0..3 {
            let idx = m.param_index(i, j, k);
            let h = 1e-5;
            let mut p = base.clone();
            p[idx] += h;
            probe.set_params(&p);
            let up = probe.eval_level_set(x, None);
            p[idx] -= 2.0 * h;
            probe.set_params(&p);
            let down = probe.eval_level_set(x, None);
            let fd = (up - down) / (2.0 * h);
            if analytic[k].abs().max(fd.abs()) >= 1e-6 {
                worst_point = worst_point.max(rel_err(analytic[k], fd));
            }
        }
        samples += 1;
    }

    // Whole-energy gradients on 32x32 images.
    let mut worst_two_phase: f64 = 0.0;
    let mut worst_deformation: f64 = 0.0;
    for trial in 0..3 {
        let cfg = ModelConfig {
            n_polytopes: [1, 2, 4][trial],
            m_halfspaces: 8,
            ..ModelConfig::default()
        };
        let image = smooth_phantom(32, 32, &mut r);
        let m = jittered_model(&cfg, (32, 32), 0.3, &mut r);
        let stats = update_region_stats(&image, &m).expect("stats");
        let analytic = two_phase_gradient(&image, &m, &stats).expect("gradient");
        let fd = fd_gradient(&m, 1e-5, |probe| oracle_two_phase_energy(&image, probe, &stats));
        worst_two_phase = worst_two_phase.max(rel_err_vec(&analytic.grad, &fd));

        let striped = GrayImage::from_fn(32, 32, |x, y| ((x * 7 + y * 3) % 3 * 100 + 20) as u8);
        let mut m = jittered_model(&cfg, (32, 32), 0.3, &mut r);
        let regions = random_regions(&mut m, &[20.0, 120.0, 220.0], &mut r);
        let analytic = deformation_gradient(&striped, &m, &regions).expect("gradient");
        let fd = fd_gradient(&m, 1e-5, |probe| oracle_deformation(&striped, probe, &regions));
        worst_deformation = worst_deformation.max(rel_err_vec(&analytic.grad, &fd));
    }
    let seconds = start.elapsed().as_secs_f64();
    let ok = samples >= POINT_GRADIENT_SAMPLES
        && worst_point < POINT_GRADIENT_REL
        && worst_two_phase < ENERGY_GRADIENT_REL
        && worst_deformation < ENERGY_GRADIENT_REL
        && seconds < ORACLE_SECONDS;
    suite.report(
        2,
        "gradient oracles",
        ok,
        format!(
            "df/dw {samples} samples max rel {worst_point:.2e} [<{POINT_GRADIENT_REL:e}]; \
             two-phase energy max rel {worst_two_phase:.2e}, deformation energy max rel \
             {worst_deformation:.2e} [<{ENERGY_GRADIENT_REL:e}]; {seconds:.1}s [<{ORACLE_SECONDS}s]"
        ),
    );
}

fn partition_property(suite: &mut Suite) {
    let mut r = rng(77);
    let (width, height) = (24, 20);
    let image = GrayImage::from_fn(width, height, |x, y| ((x * 13 + y * 29) % 256) as u8);
    let mut violations = 0usize;
    for _ in 0..PARTITION_STATES {
        let n_regions = r.random_range(2..=6);
        let cfg = ModelConfig {
            n_polytopes: r.random_range(1..=16),
            ..ModelConfig::default()
        };
        let mut m = jittered_model(&cfg, image.shape(), 1.0, &mut r);
        let mut means: Vec<f64> = (0..n_regions).map(|_| r.random_range(0.0..255.0)).collect();
        means.sort_by(f64::total_cmp);
        let regions = random_regions(&mut m, &means, &mut r);
        let map = match extract_label_map(&image, &m, &regions.region_means) {
            Ok(map) => map,
            Err(_) => {
                violations += 1;
                continue;
            }
        };
        if map.data().len() != width * height {
            violations += 1;
            continue;
        }
        for y in 0..height {
            for x in 0..width {
                let label = map.get(x, y) as usize;
                // Exactly one region: a valid index that the extraction rule selects.
                let f = unpruned_regions(&m, [x as f64, y as f64], n_regions);
                let top = f.iter().cloned().fold(0.0, f64::max);
                let consistent = if top >= 0.5 + 1e-8 {
                    (0..n_regions).any(|k| k == label && f[k] >= top - 1e-8)
                } else if top < 0.5 - 1e-8 {
                    label == best_region(image.get(x, y) as f64, &means)
                } else {
                    true
                };
                if label >= n_regions || !consistent {
                    violations += 1;
                }
            }
        }
    }
    suite.report(
        3,
        "multiphase partition",
        violations == 0,
        format!("{PARTITION_STATES} random states, {violations} pixels without exactly one region"),
    );
}

fn scaling_flatness(suite: &mut Suite) {
    let cfg = BenchConfig::default();
    match single_thread(|| run_bench(&cfg)) {
        Ok(report) => {
            let dice_ok = report.rows.iter().all(|r| r.mean_dice >= BENCH_DICE);
            let memory = report.memory_ratio.unwrap_or(f64::INFINITY);
            let ok = report.time_ratio <= BENCH_TIME_RATIO && dice_ok && memory <= BENCH_MEMORY_RATIO;
            let rows: Vec<String> = report
                .rows
                .iter()
                .map(|r| {
                    format!(
                        "{} objects {:.2}s dice={:.4} peak={}KiB",
                        r.objects,
                        r.wall_time,
                        r.mean_dice,
                        r.peak_bytes.unwrap_or(0) / 1024
                    )
                })
                .collect();
            suite.report(
                4,
                "scaling flatness",
                ok,
                format!(
                    "{}; time ratio {:.3} [<={BENCH_TIME_RATIO}], memory ratio {memory:.3} \
                     [<={BENCH_MEMORY_RATIO}], dice [>={BENCH_DICE}]",
                    rows.join("; "),
                    report.time_ratio
                ),
            );
        }
        Err(e) => suite.report(4, "scaling flatness", false, format!("error: {e}")),
    }
}

/// Runs multiphase segmentation and returns the per-region DICE.
fn multiphase_run(
    name: &str,
    spec: &PhantomSpec,
    model: &ModelConfig,
    mp: &MultiphaseConfig,
    iterates: &mut Iterates,
) -> Result<Vec<f64>, String> {
    let (image, truth) = generate_phantom(spec).map_err(|e| e.to_string())?;
    let evo = EvolutionConfig::multiphase();
    let mut kept = Iterates::default();
    let result = segment_multiphase_observed(&image, model, &evo, mp, &mut |t, m, _| {
        if Iterates::wants(t, evo.max_iters) {
            kept.keep(name, t, m);
        }
    })
    .map_err(|e| e.to_string())?;
    iterates.models.extend(kept.models);
    iterates.keep(name, result.iterations_run, &result.model);
    let score = dice_multilabel(&result.label_map, &truth, LabelMatching::HungarianGreedy).map_err(|e| e.to_string())?;
    Ok(score.per_region)
}

fn initialization_robustness(suite: &mut Suite, iterates: &mut Iterates) {
    let spec = PhantomSpec {
        objects: 2,
        fill: 0.6,
        ..PhantomSpec::default()
    };
    let model = ModelConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut runs: Vec<(String, MultiphaseConfig, f64)> = (0..RANDOM_INIT_SEEDS)
        .map(|seed| {
            let mp = MultiphaseConfig {
                init: InitStrategy::Random,
                seed,
                ..MultiphaseConfig::new(3)
            };
            (format!("random seed {seed}"), mp, RANDOM_INIT_DICE)
        })
        .collect();
    runs.push((
        "multi-otsu".into(),
        MultiphaseConfig {
            init: InitStrategy::MultiOtsu,
            ..MultiphaseConfig::new(3)
        },
        OTSU_INIT_DICE,
    ));
    for (name, mp, floor) in runs {
        match multiphase_run(&name, &spec, &model, &mp, iterates) {
            Ok(per_region) => {
                let min = per_region.iter().cloned().fold(1.0, f64::min);
                ok &= min >= floor;
                parts.push(format!("{name} min={min:.4} [>={floor}]"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{name} error: {e}"));
            }
        }
    }
    suite.report(5, "initialization robustness (3 regions, per-region dice)", ok, parts.join("; "));
}

fn kmeans_oracle(suite: &mut Suite) {
    fn exhaustive(values: &[f64], k: usize) -> f64 {
        let n = values.len();
        let mut labels = vec![0usize; n];
        let mut best = f64::INFINITY;
        loop {
            if (0..k).all(|c| labels.contains(&c)) {
                best = best.min(wcss(values, &labels, k));
            }
            let mut i = 0;
            while i < n && labels[i] == k - 1 {
                labels[i] = 0;
                i += 1;
            }
            if i == n {
                return best;
            }
            labels[i] += 1;
        }
    }
    fn stable(values: &[f64], labels: &[usize], k: usize) -> bool {
        let base = wcss(values, labels, k);
        let mut moved = labels.to_vec();
        for i in 0..values.len() {
            let own = labels[i];
            if labels.iter().filter(|&&l| l == own).count() == 1 {
                continue;
            }
            for c in (0..k).filter(|&c| c != own) {
                moved[i] = c;
                if wcss(values, &moved, k) < base - 1e-9 * base.max(1.0) {
                    return false;
                }
            }
            moved[i] = own;
        }
        true
    }
    let mut r = rng(606);
    let (mut optimal, mut unstable) = (0, 0);
    for _ in 0..KMEANS_INSTANCES {
        let n = r.random_range(3..=12);
        let k = r.random_range(1..=3);
        let values: Vec<f64> = (0..n).map(|_| r.random_range(0.0..255.0)).collect();
        let p = PolytopeIntensity {
            values: values.clone(),
            support: vec![1.0; n],
            centroids: (0..n).map(|i| [i as f64, 0.0]).collect(),
        };
        let Ok(result) = assign_labels_kmeans(&p, k, None) else {
            unstable += 1;
            continue;
        };
        let cost = wcss(&values, &result.polytope_labels, k);
        let best = exhaustive(&values, k);
        if cost <= best + 1e-9 * best.max(1.0) {
            optimal += 1;
        } else if !stable(&values, &result.polytope_labels, k) {
            unstable += 1;
        }
    }
    suite.report(
        6,
        "k-means oracle",
        optimal >= KMEANS_OPTIMAL && unstable == 0,
        format!(
            "{optimal}/{KMEANS_INSTANCES} globally optimal [>={KMEANS_OPTIMAL}], \
             {unstable} non-optimal results that a single move improves [0]"
        ),
    );
}

/// Largest `|grad f|` by central differences between pixel centers.
fn max_pixel_gradient(field: &[f64], width: usize, height: usize) -> f64 {
    let at = |x: usize, y: usize| field[y * width + x];
    let mut worst: f64 = 0.0;
    for y in 0..height {
        for x in 0..width {
            let (x0, x1) = (x.saturating_sub(1), (x + 1).min(width - 1));
            let (y0, y1) = (y.saturating_sub(1), (y + 1).min(height - 1));
            let gx = if x1 > x0 { (at(x1, y) - at(x0, y)) / (x1 - x0) as f64 } else { 0.0 };
            let gy = if y1 > y0 { (at(x, y1) - at(x, y0)) / (y1 - y0) as f64 } else { 0.0 };
            worst = worst.max(gx.hypot(gy));
        }
    }
    worst
}

fn regularity(suite: &mut Suite, iterates: &mut Iterates) {
    // A 12-object run in addition to the runs of criteria 1 and 5.
    let spec = PhantomSpec {
        width: 300,
        height: 300,
        objects: 12,
        ..PhantomSpec::default()
    };
    let model = ModelConfig {
        n_polytopes: 225,
        ..ModelConfig::default()
    };
    let mp = MultiphaseConfig {
        init: InitStrategy::MultiOtsu,
        ..MultiphaseConfig::new(13)
    };
    let extra = multiphase_run("12 objects", &spec, &model, &mp, iterates);

    let mut worst = (0.0f64, String::new());
    let mut ok = extra.is_ok();
    for (name, m) in &iterates.models {
        let (height, width) = m.image_shape();
        let bound = m.steepness() * m.m_halfspaces() as f64 / 2.0;
        let regions = m.labels().into_iter().max().unwrap_or(0) + 1;
        let mut fields = vec![m.field(None)];
        if regions > 1 {
            fields.extend((0..regions).map(|r| m.field(Some(r))));
        }
        for field in &fields {
            let g = max_pixel_gradient(field, width, height);
            ok &= g <= bound;
            if g > worst.0 {
                worst = (g, name.clone());
            }
        }
    }
    let bound = ModelConfig::default().steepness * ModelConfig::default().m_halfspaces as f64 / 2.0;
    suite.report(
        7,
        "regularity",
        ok,
        format!(
            "{} iterates, max |grad f| {:.3} at {} [<= s*M/2 = {bound}]{}",
            iterates.models.len(),
            worst.0,
            worst.1,
            match &extra {
                Ok(d) => format!("; 12-object run mean dice {:.4}", d.iter().sum::<f64>() / d.len() as f64),
                Err(e) => format!("; 12-object run error: {e}"),
            }
        ),
    );
}

fn main() {
    let mut suite = Suite { failed: 0 };
    let mut iterates = Iterates::default();
    two_phase_accuracy(&mut suite, &mut iterates);
    gradient_oracles(&mut suite);
    partition_property(&mut suite);
    scaling_flatness(&mut suite);
    initialization_robustness(&mut suite, &mut iterates);
    kmeans_oracle(&mut suite);
    regularity(&mut suite, &mut iterates);
    if suite.failed > 0 {
        println!("{} criteria failed", suite.failed);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
