//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Statistical criteria run the shipped `configs/desk.toml` through the
//! experiment runner; the rest are checked directly against oracles written
//! here.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hsaur::action_select::{axis_direction, optimize_action, ActionSelectConfig, Deformation};
use hsaur::bench::baselines::{run_baseline, Policy};
use hsaur::bench::experiment::{run_experiment, ExperimentConfig, ExperimentReport};
use hsaur::bench::scenes::{check_solvable, single_joint_suite, PUZZLE_LEVELS};
use hsaur::bench::{generate_scene, SceneSpec, Setting};
use hsaur::estimator::{update_posterior, Estimator, EstimatorConfig};
use hsaur::geometry::{chamfer, fit_bounding_box, transform_cloud, PointCloud, Vec3};
use hsaur::hypotheses::{systematic_indices, HypothesisParticle, ParticlePool};
use hsaur::kinematics::{propose_joints, JointClass, JointState};
use hsaur::puzzle::{resolve_direction, PuzzleConfig};
use hsaur::sim::{Action, PartId, World, CONTACT_TOLERANCE, STEP_GAIN};

struct Verdict {
    failures: usize,
}

impl Verdict {
    fn check(&mut self, id: &str, title: &str, pass: bool, detail: String) {
        println!("{} [{id}] {title}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

fn report(report: &ExperimentReport, suite: &str, group: &str, variant: &str, method: &str, metric: &str) -> f64 {
    report
        .value(suite, group, variant, method, metric)
        .unwrap_or_else(|| panic!("report has no {suite}/{group}/{variant}/{method}/{metric}"))
}

fn statistical(v: &mut Verdict) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let cfg = ExperimentConfig::load(&path).expect("desk config");
    let start = Instant::now();
    let r = run_experiment(&cfg, None).expect("desk experiment");
    println!("desk config: {} runs in {:.0}s", r.records.len(), start.elapsed().as_secs_f64());

    let base = "chamfer sigma=0";
    let closed = report(&r, "estimation", "closed", base, "hsaur", "accuracy");
    let half = report(&r, "estimation", "half_opened", base, "hsaur", "accuracy");
    let mean = (closed + half) / 2.0;
    v.check(
        "1",
        "joint-type accuracy >= 0.90",
        mean >= 0.90,
        format!("{mean:.4} (closed {closed:.4}, half-opened {half:.4})"),
    );

    let noisy: Vec<f64> = ["0.1", "0.2", "0.3"]
        .iter()
        .map(|s| report(&r, "noise", "closed", &format!("chamfer sigma={s}"), "hsaur", "accuracy"))
        .collect();
    let worst = noisy.iter().copied().fold(f64::INFINITY, f64::min);
    v.check(
        "2",
        "noise costs <= 6 points",
        closed - worst <= 0.06 + 1e-12,
        format!("sigma=0 {closed:.4}, sigma 0.1/0.2/0.3 {:.4}/{:.4}/{:.4}", noisy[0], noisy[1], noisy[2]),
    );

    let cosine = report(&r, "cosine", "closed", "cosine sigma=0", "hsaur", "accuracy");
    v.check(
        "3",
        "chamfer beats cosine by >= 5 points",
        closed - cosine >= 0.05,
        format!("chamfer {closed:.4}, cosine {cosine:.4}"),
    );

    let acc = report(&r, "affordance", "closed", "", "hsaur", "accuracy");
    let l1 = report(&r, "affordance", "closed", "", "hsaur", "l1_error");
    v.check(
        "5",
        "affordance accuracy >= 0.90, L1 <= 0.05",
        acc >= 0.90 && l1 <= 0.05,
        format!("accuracy {acc:.4}, L1 {l1:.4}"),
    );

    let opened = report(&r, "manipulation", "closed", "10+5", "hsaur", "proportion_opened");
    v.check("6", "proportion opened >= 0.85", opened >= 0.85, format!("{opened:.4}"));

    let mut ok = true;
    let mut detail = Vec::new();
    for (c, l) in PUZZLE_LEVELS {
        let group = format!("({c},{l})");
        let ours = report(&r, "puzzle", &group, "", "hsaur", "solve_rate");
        let random = report(&r, "puzzle", &group, "", "random", "solve_rate");
        let need = if (c, l) == (1, 1) { 0.9 } else { 0.8 };
        ok &= ours >= need;
        match (c, l) {
            (1, 1) => ok &= random <= 0.25,
            (3, 1) => ok &= random <= 0.1,
            _ => {}
        }
        detail.push(format!("{group} {ours:.3}/random {random:.3}"));
    }
    v.check("7", "puzzle solve rates", ok, detail.join(", "));
}

/// Exhaustive deformation maximum over every surface point and axis.
fn exhaustive_deformation(replica: &World, part: PartId) -> f64 {
    let cloud = replica.observe_part(part).unwrap();
    let mut best: f64 = 0.0;
    for p in cloud.points() {
        for d in 0..6 {
            let m = replica.preview(part, &Action { point: *p, direction: axis_direction(d) }).unwrap();
            best = best.max(m.displacement().abs());
        }
    }
    best
}

fn near_optimality(v: &mut Verdict) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = ActionSelectConfig::default();
    let mut ratios = Vec::new();
    while ratios.len() < 50 {
        let class = JointClass::ALL[rng.random_range(0..7)];
        let setting = if rng.random::<bool>() { Setting::Closed } else { Setting::HalfOpened };
        let scene = generate_scene(&SceneSpec::single(class, setting, rng.random_range(0..10))).unwrap();
        let part = scene.task().goal_part;
        let pool = ParticlePool::sample_prior(&scene.world, part, 1, None, &mut rng).unwrap();
        let replica = &pool.particles[0].replica;
        let best = exhaustive_deformation(replica, part);
        if best == 0.0 {
            continue;
        }
        let observed = scene.world.observe_part(part).unwrap();
        let (chosen, _, _) = optimize_action(replica, part, &observed, &Deformation, &cfg, &mut rng).unwrap();
        ratios.push(chosen.score / best);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    v.check(
        "4",
        "action filter near-optimal",
        mean >= 0.99 && min >= 0.95,
        format!("mean {mean:.4}, min {min:.4} over {} pairs", ratios.len()),
    );
}

fn brute_chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
    let mut total = 0.0;
    for x in a {
        let mut best = f64::INFINITY;
        for y in b {
            let d = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2);
            best = best.min(d);
        }
        total += best;
    }
    total / a.len() as f64
}

fn random_cloud<R: Rng>(n: usize, rng: &mut R) -> Vec<Vec3> {
    (0..n).map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn oracles(v: &mut Verdict) {
    // (a) chamfer against brute force
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for n in (1..=200).step_by(7) {
        let m = rng.random_range(1..=200);
        let (a, b) = (random_cloud(n, &mut rng), random_cloud(m, &mut rng));
        let got = chamfer(&PointCloud::new(a.clone()).unwrap(), &PointCloud::new(b.clone()).unwrap());
        worst = worst.max((got - brute_chamfer(&a, &b)).abs());
    }
    v.check("8a", "chamfer equals brute force", worst <= 1e-12, format!("max error {worst:.2e}"));

    // (b) two-particle Bayes update in closed form
    let scene = generate_scene(&SceneSpec::single(JointClass::PrisY, Setting::Closed, 0)).unwrap();
    let world = scene.world.clone();
    let part = scene.task().goal_part;
    let truth = world.parts[part].joint;
    let fixed = JointState::fixed(truth.spec.anchor);
    let observed = world.observe_part(part).unwrap();
    let proposals = propose_joints(&fit_bounding_box(&observed));
    let prior = [0.3, 0.7];
    let mut pool = ParticlePool {
        target: part,
        proposals,
        particles: vec![
            HypothesisParticle { proposal: 0, replica: world.clone() },
            HypothesisParticle { proposal: 18, replica: world.clone_with_joint(part, fixed).unwrap() },
        ],
        weights: prior.to_vec(),
    };
    let (action, real_after) = (0..)
        .map(|i| {
            let p = observed.points()[i];
            let a = Action { point: p, direction: Vec3::new(0.0, -1.0, 0.0) };
            let mut w = world.clone();
            let out = w.apply_action(part, &a).unwrap();
            (a, w, out)
        })
        .find(|(_, _, out)| out.target_displacement().abs() > 1e-3 && out.contacts.is_empty())
        .map(|(a, w, _)| (a, w.observe_part(part).unwrap()))
        .unwrap();
    let cfg = EstimatorConfig::default();
    let summary =
        update_posterior(&mut pool, &action, &observed, &real_after, &world, &[], &cfg, &mut rng).unwrap();
    let eps = cfg.chamfer_epsilon;
    let lik = [1.0 / (0.0 + eps), 1.0 / (brute_chamfer(real_after.points(), observed.points()) + eps)];
    let z = prior[0] * lik[0] + prior[1] * lik[1];
    let expected = [prior[0] * lik[0] / z, prior[1] * lik[1] / z];
    let err = (summary.posterior_weights[0] - expected[0]).abs().max((summary.posterior_weights[1] - expected[1]).abs());
    v.check("8b", "two-particle Bayes update", err <= 1e-9, format!("max error {err:.2e}"));

    // (c) direction resolution against exhaustive evaluation
    let mut mismatches = 0;
    let mut cases = 0;
    for seed in 0..20 {
        let scene = generate_scene(&SceneSpec::puzzle(1, 1, false, seed)).unwrap();
        let w = &scene.world;
        for p in w.parts.iter().filter(|p| p.movable) {
            for other in w.parts.iter().filter(|o| o.id != p.id) {
                let collided = w.observe_part(other.id).unwrap();
                let n = 11;
                let j = p.joint;
                let mut best = (f64::NAN, f64::NEG_INFINITY);
                for i in 0..n {
                    let theta = j.theta_low + (j.theta_high - j.theta_low) * i as f64 / (n - 1) as f64;
                    let posed = transform_cloud(&p.rest_cloud, &j.spec.transform_at(theta));
                    let d = brute_chamfer(posed.points(), collided.points());
                    if d > best.1 || (d == best.1 && theta.abs() < best.0.abs()) {
                        best = (theta, d);
                    }
                }
                cases += 1;
                mismatches += usize::from(resolve_direction(w, p.id, &collided, n).unwrap() != best.0);
            }
        }
    }
    v.check("8c", "resolved direction is the exhaustive best", mismatches == 0, format!("{mismatches}/{cases} mismatches"));

    // (d) systematic resampling split
    let idx = systematic_indices(&[0.75, 0.25], 4, rng.random::<f64>()).unwrap();
    let zeros = idx.iter().filter(|&&i| i == 0).count();
    v.check("8d", "systematic resampling 3:1", zeros == 3 && idx.len() == 4, format!("{idx:?}"));
}

fn scene_pool() -> Vec<World> {
    let mut worlds: Vec<World> = [Setting::Closed, Setting::HalfOpened]
        .into_iter()
        .flat_map(|s| single_joint_suite(s, 0..3))
        .map(|spec| generate_scene(&spec).unwrap().world)
        .collect();
    for (c, l) in PUZZLE_LEVELS {
        for seed in 0..3 {
            worlds.push(generate_scene(&SceneSpec::puzzle(c, l, seed % 2 == 1, seed)).unwrap().world);
        }
    }
    worlds
}

fn random_action<R: Rng>(world: &World, part: PartId, rng: &mut R) -> Action {
    let cloud = world.observe_part(part).unwrap();
    let point = cloud.points()[rng.random_range(0..cloud.len())];
    loop {
        let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if let Ok(a) = Action::new(point, d) {
            return a;
        }
    }
}

fn movable_part<R: Rng>(world: &World, rng: &mut R) -> Option<PartId> {
    let movable: Vec<PartId> = world.parts.iter().filter(|p| p.movable).map(|p| p.id).collect();
    (!movable.is_empty()).then(|| movable[rng.random_range(0..movable.len())])
}

fn overlaps(world: &World, part: PartId, theta: f64) -> Vec<PartId> {
    let p = &world.parts[part];
    let moving = p.rest_box().transformed(&p.joint.spec.transform_at(theta));
    world.partners(part).filter(|&o| moving.intersects(&world.parts[o].current_box(), CONTACT_TOLERANCE)).collect()
}

/// Sweeps the same commanded motion in 1000 substeps; returns the last free
/// value and whether a contact stopped it.
fn fine_sweep(world: &World, part: PartId, action: &Action) -> (f64, f64, bool) {
    let p = &world.parts[part];
    let before = p.joint.theta_cur;
    let raw = p.joint.spec.velocity_direction(&action.point).map_or(0.0, |v| STEP_GAIN * action.direction.dot(&v));
    let goal = p.joint.clamp(before + raw);
    let mut reached = before;
    for i in 1..=1000 {
        let theta = before + (goal - before) * i as f64 / 1000.0;
        if !overlaps(world, part, theta).is_empty() {
            return (reached, goal, true);
        }
        reached = theta;
    }
    (reached, goal, false)
}

fn invariants(v: &mut Verdict) {
    const TRIALS: usize = 1000;
    let worlds = scene_pool();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pick = |rng: &mut ChaCha8Rng| worlds[rng.random_range(0..worlds.len())].clone();

    // limit clamping
    let mut bad = 0;
    for _ in 0..TRIALS {
        let mut w = pick(&mut rng);
        let Some(part) = movable_part(&w, &mut rng) else { continue };
        let j = w.parts[part].joint;
        w.set_theta(part, rng.random_range(j.theta_low..=j.theta_high)).unwrap();
        for _ in 0..3 {
            let a = random_action(&w, part, &mut rng);
            w.apply_action(part, &a).unwrap();
            let t = w.theta(part).unwrap();
            bad += usize::from(!(j.theta_low..=j.theta_high).contains(&t));
        }
    }
    v.check("9a", "joint values stay within limits", bad == 0, format!("{bad} violations in {TRIALS} trials"));

    // posterior normalization
    let mut bad = 0;
    let cfg = EstimatorConfig::default();
    for _ in 0..TRIALS {
        let w = pick(&mut rng);
        let Some(part) = movable_part(&w, &mut rng) else { continue };
        let k = rng.random_range(1..=24);
        let mut pool = ParticlePool::sample_prior(&w, part, k, None, &mut rng).unwrap();
        let a = random_action(&w, part, &mut rng);
        let before = w.observe_part(part).unwrap();
        let mut real = w.clone();
        let out = real.apply_action(part, &a).unwrap();
        let blockers: Vec<PartId> = out.contacts.iter().map(|c| c.blocking).collect();
        let after = real.observe_part(part).unwrap();
        let s = update_posterior(&mut pool, &a, &before, &after, &w, &blockers, &cfg, &mut rng).unwrap();
        let total: f64 = s.posterior_weights.iter().sum();
        let classes: f64 = s.posterior.0.iter().sum();
        bad += usize::from(
            (total - 1.0).abs() > 1e-9 || (classes - 1.0).abs() > 1e-9 || !pool.is_normalized(1e-9) || pool.len() != k,
        );
    }
    v.check("9b", "posteriors stay normalized", bad == 0, format!("{bad} violations in {TRIALS} trials"));

    // determinism and interaction accounting
    let mut bad = 0;
    let small = EstimatorConfig {
        n_particles: 12,
        action: ActionSelectConfig { n_action_particles: 16, ..Default::default() },
        ..Default::default()
    };
    for _ in 0..TRIALS {
        let w = pick(&mut rng);
        let Some(part) = movable_part(&w, &mut rng) else { continue };
        let seed = rng.random::<u64>();
        let budget = rng.random_range(0..=2);
        let run = || {
            let mut world = w.clone();
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut est = Estimator::new(&world, part, small.clone(), None, &mut r).unwrap();
            let (_, _, used) = est.run(&mut world, budget, &mut r).unwrap();
            (est.trajectory, est.interactions, used, world)
        };
        let (a, b) = (run(), run());
        bad += usize::from(a != b || a.2 > budget || a.1 != a.2 || a.0.len() != a.1);
    }
    v.check("9c", "seeded runs repeat exactly", bad == 0, format!("{bad} violations in {TRIALS} trials"));

    let mut bad = 0;
    for i in 0..TRIALS {
        let (c, l) = PUZZLE_LEVELS[i % PUZZLE_LEVELS.len()];
        let scene = generate_scene(&SceneSpec::puzzle(c, l, false, (i / 5) as u64 % 6)).unwrap();
        let budget = rng.random_range(0..=12);
        let cfg = PuzzleConfig { max_interactions: budget, ..PuzzleConfig::for_task(scene.task()) };
        let policy = if rng.random::<bool>() { Policy::Random } else { Policy::Heuristic };
        let r = run_baseline(&mut scene.world.clone(), policy, &cfg, rng.random()).unwrap();
        bad += usize::from(r.interactions_used > budget || r.goal_theta.len() != r.interactions_used);
    }
    v.check("9d", "interaction budgets are respected", bad == 0, format!("{bad} violations in {TRIALS} trials"));

    // blocking soundness against a 1000-substep sweep
    let (mut bad, mut contacts, mut trials) = (0, 0, 0);
    while trials < TRIALS {
        let mut w = pick(&mut rng);
        let Some(part) = movable_part(&w, &mut rng) else { continue };
        let j = w.parts[part].joint;
        w.set_theta(part, rng.random_range(j.theta_low..=j.theta_high)).unwrap();
        if !overlaps(&w, part, w.theta(part).unwrap()).is_empty() {
            continue;
        }
        trials += 1;
        let a = random_action(&w, part, &mut rng);
        let (fine, goal, hit) = fine_sweep(&w, part, &a);
        let m = w.preview(part, &a).unwrap();
        let before = m.theta_before;
        let coarse_step = (goal - before).abs() / hsaur::sim::SUBSTEPS as f64;
        contacts += usize::from(hit);
        let ends_free = overlaps(&w, part, m.theta_after).is_empty();
        // never past the first contact, and at most one coarse substep short of it
        let within = (m.theta_after - before).abs() <= (fine - before).abs() + 1e-12;
        let close = (fine - m.theta_after).abs() <= coarse_step + 1e-12;
        let agrees = hit == !m.contacts.is_empty();
        bad += usize::from(!(ends_free && within && close && agrees));
    }
    v.check(
        "9e",
        "blocking matches a 1000-substep sweep",
        bad == 0,
        format!("{bad} violations in {TRIALS} trials ({contacts} with contact)"),
    );

    let mut bad = 0;
    for i in 0..TRIALS {
        let (c, l) = PUZZLE_LEVELS[i % PUZZLE_LEVELS.len()];
        let scene = generate_scene(&SceneSpec::puzzle(c, l, i % 2 == 1, (i / 10) as u64)).unwrap();
        bad += usize::from(check_solvable(&scene).is_err());
    }
    v.check("9f", "generated puzzles are solvable", bad == 0, format!("{bad} failures in {TRIALS} scenes"));
}

fn main() -> ExitCode {
    let mut v = Verdict { failures: 0 };
    let start = Instant::now();
    oracles(&mut v);
    near_optimality(&mut v);
    invariants(&mut v);
    statistical(&mut v);
    println!("{} failing criteria, {:.0}s", v.failures, start.elapsed().as_secs_f64());
    if v.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
