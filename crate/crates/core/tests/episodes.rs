use etstl::controller::TriggerCause;
use etstl::sim::{run_episode, EpisodeConfig, EpisodeResult, Outcome, Plant, PlantModel, SingleIntegrator};
use etstl::stl::{monitor_robustness, normalize_sequential, parse_formula, TemporalOp};
use proptest::prelude::*;

fn integrator(n: usize) -> Plant {
    Plant::new(PlantModel::SingleIntegrator(SingleIntegrator { dim: n }))
}

fn cfg(horizon: f64) -> EpisodeConfig {
    EpisodeConfig {
        horizon,
        gain: 5.0,
        ..EpisodeConfig::default()
    }
}

#[derive(Debug, Clone)]
struct Task {
    always: bool,
    center: (f64, f64),
    radius: f64,
    len: f64,
    gap: f64,
}

fn task() -> impl Strategy<Value = Task> {
    (any::<bool>(), -5.0..5.0f64, -5.0..5.0f64, 1.5..3.0f64, 3.0..8.0f64, 1.0..3.0f64).prop_map(
        |(always, cx, cy, radius, len, gap)| Task {
            always,
            center: (cx, cy),
            radius,
            len,
            gap,
        },
    )
}

fn ball(t: &Task) -> String {
    format!("ball(0,1;{},{};{})", t.center.0, t.center.1, t.radius)
}

/// Ordered conjunction with a gap before every window.
fn ordered(tasks: &[Task]) -> (String, Vec<(f64, f64)>) {
    let mut t = 0.0;
    let mut parts = Vec::new();
    let mut windows = Vec::new();
    for task in tasks {
        let (a, b) = (t + task.gap, t + task.gap + task.len);
        parts.push(format!("{}[{a},{b}] {}", if task.always { "G" } else { "F" }, ball(task)));
        windows.push((a, b));
        t = b;
    }
    (parts.join(" and "), windows)
}

fn check_common(res: &EpisodeResult, n_tasks: usize, dt: f64) {
    assert_eq!(res.outcome, Outcome::Completed, "{}", res.outcome);
    assert!(res.passed());
    assert_eq!(res.jumps.len(), n_tasks);
    for (k, j) in res.jumps.iter().enumerate() {
        assert_eq!(j.from, k + 1);
    }
    let mode = &res.trajectory.mode;
    assert!(mode.windows(2).all(|w| w[0] <= w[1] && w[1] - w[0] <= 1));
    assert_eq!(*mode.last().unwrap(), n_tasks + 1);
    assert!(res.jumps.windows(2).all(|w| w[0].t <= w[1].t));

    // input changes only at events, and every event is justified
    let tr = &res.trajectory;
    let event_samples: Vec<usize> = res
        .events
        .iter()
        .map(|e| (e.t / dt).round() as usize)
        .collect();
    for k in 1..tr.len() {
        if tr.input(k) != tr.input(k - 1) {
            assert!(event_samples.binary_search(&k).is_ok(), "input changed at sample {k}");
        }
    }
    for w in res.events.windows(2) {
        let (prev, ev) = (&w[0], &w[1]);
        match ev.cause {
            TriggerCause::StateDeviation => {
                let dev = ev.x.iter().zip(&prev.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(dev > prev.delta);
            }
            TriggerCause::MaxInterval => assert!(ev.t - prev.t > prev.delta),
            TriggerCause::ModeSwitch => {
                assert!(res.jumps.iter().any(|j| (j.t - ev.t).abs() < 1e-9))
            }
            TriggerCause::Initial => panic!("second initial event"),
        }
        assert!(ev.t - prev.t >= dt * (1.0 - 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ordered_tasks_meet_their_windows(
        tasks in prop::collection::vec(task(), 1..=3),
        x0 in (-8.0..8.0f64, -8.0..8.0f64),
    ) {
        let (text, windows) = ordered(&tasks);
        let theta = parse_formula(&text).unwrap();
        let horizon = windows.last().unwrap().1 + 1.0;
        let res = run_episode(&theta, &integrator(2), &[x0.0, x0.1], &cfg(horizon)).unwrap();
        let dt = 0.01;
        check_common(&res, tasks.len(), dt);

        for ((task, (a, b)), jump) in tasks.iter().zip(&windows).zip(&res.jumps) {
            if task.always {
                prop_assert!((jump.t - b).abs() <= dt + 1e-9, "G jump {} vs {b}", jump.t);
            } else {
                prop_assert!(jump.t >= a - 1e-9 && jump.t <= b + 1e-9, "F jump {} outside [{a}, {b}]", jump.t);
            }
        }
        let elapsed: f64 = res.jumps.iter().map(|j| j.local).sum();
        prop_assert!((elapsed - res.jumps.last().unwrap().t).abs() < 1e-9);

        let rho = monitor_robustness(&theta, &res.trajectory.signal(), 0.0).unwrap();
        prop_assert_eq!(rho, res.metrics.rho_theta);
        let r = res.syntheses.iter().map(|s| s.params.r).fold(f64::INFINITY, f64::min);
        let rho_max = res.syntheses.iter().map(|s| s.params.rho_max).fold(f64::INFINITY, f64::min);
        prop_assert!(rho > r && rho < rho_max, "{rho} not in ({r}, {rho_max})");
    }

    #[test]
    fn chains_use_local_windows(
        tasks in prop::collection::vec(task(), 2..=3),
        x0 in (-8.0..8.0f64, -8.0..8.0f64),
    ) {
        // F[c1,d1](psi1 and F[c2,d2](psi2 ...))
        let steps: Vec<(f64, f64)> = tasks.iter().map(|t| (t.gap, t.gap + t.len)).collect();
        let mut text = String::new();
        for (k, (t, (c, d))) in tasks.iter().zip(&steps).enumerate() {
            if k + 1 < tasks.len() {
                text.push_str(&format!("F[{c},{d}]({} and ", ball(t)));
            } else {
                text.push_str(&format!("F[{c},{d}] {}", ball(t)));
            }
        }
        text.push_str(&")".repeat(tasks.len() - 1));
        let theta = parse_formula(&text).unwrap();

        let norm = normalize_sequential(&theta);
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (task, (c, d)) in norm.iter().zip(&steps) {
            lo += c;
            hi += d;
            prop_assert_eq!(task.op, TemporalOp::Eventually);
            prop_assert!((task.window.lo - lo).abs() < 1e-12 && (task.window.hi - hi).abs() < 1e-12);
            prop_assert_eq!((task.step.lo, task.step.hi), (*c, *d));
        }

        let horizon = hi + 1.0;
        let res = run_episode(&theta, &integrator(2), &[x0.0, x0.1], &cfg(horizon)).unwrap();
        check_common(&res, tasks.len(), 0.01);
        let mut delta = 0.0;
        for ((c, d), jump) in steps.iter().zip(&res.jumps) {
            prop_assert!(jump.local >= c - 1e-9 && jump.local <= d + 1e-9, "local {} outside [{c}, {d}]", jump.local);
            delta += jump.local;
            prop_assert!((jump.t - delta).abs() < 1e-9);
        }
    }
}
