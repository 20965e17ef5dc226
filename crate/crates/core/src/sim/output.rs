//! CSV and key-value writers for episode results.

use std::fmt::Write as _;
use std::io;

use super::EpisodeResult;

fn header(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |k| format!("{prefix}{k}"))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// `t, x1..xn, u1..um, rho_active, gamma, mode`
pub fn write_trajectory_csv<W: io::Write>(res: &EpisodeResult, w: W) -> csv::Result<()> {
    let tr = &res.trajectory;
    let mut out = csv::Writer::from_writer(w);
    let mut head = vec!["t".to_string()];
    head.extend(header("x", tr.dim));
    head.extend(header("u", tr.input_dim));
    head.extend(["rho_active", "gamma", "mode"].map(String::from));
    out.write_record(&head)?;
    for k in 0..tr.len() {
        let mut row = vec![num(tr.times[k])];
        row.extend(tr.state(k).iter().copied().map(num));
        row.extend(tr.input(k).iter().copied().map(num));
        row.push(num(tr.rho[k]));
        row.push(num(tr.gamma[k]));
        row.push(tr.mode[k].to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `i, t_i, cause, delta_i, x1..xn, u1..um`
pub fn write_events_csv<W: io::Write>(res: &EpisodeResult, w: W) -> csv::Result<()> {
    let tr = &res.trajectory;
    let mut out = csv::Writer::from_writer(w);
    let mut head = ["i", "t_i", "cause", "delta_i"].map(String::from).to_vec();
    head.extend(header("x", tr.dim));
    head.extend(header("u", tr.input_dim));
    out.write_record(&head)?;
    for ev in &res.events {
        let mut row = vec![
            ev.index.to_string(),
            num(ev.t),
            ev.cause.to_string(),
            num(ev.delta),
        ];
        row.extend(ev.x.iter().copied().map(num));
        row.extend(ev.u.iter().copied().map(num));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Funnel bounds against the active robustness: `t, mode, rho, lower, upper`.
pub fn write_funnel_csv<W: io::Write>(res: &EpisodeResult, w: W) -> csv::Result<()> {
    let tr = &res.trajectory;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "mode", "rho", "lower", "upper"])?;
    for k in 0..tr.len() {
        out.write_record([
            num(tr.times[k]),
            tr.mode[k].to_string(),
            num(tr.rho[k]),
            num(tr.rho_max[k] - tr.gamma[k]),
            num(tr.rho_max[k]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Held inputs and their distance to the continuous law:
/// `t, u1..um, law_gap`.
pub fn write_inputs_csv<W: io::Write>(res: &EpisodeResult, w: W) -> csv::Result<()> {
    let tr = &res.trajectory;
    let mut out = csv::Writer::from_writer(w);
    let mut head = vec!["t".to_string()];
    head.extend(header("u", tr.input_dim));
    head.push("law_gap".into());
    out.write_record(&head)?;
    for k in 0..tr.len() {
        let mut row = vec![num(tr.times[k])];
        row.extend(tr.input(k).iter().copied().map(num));
        row.push(num(tr.law_gap[k]));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Flat `key = value` summary. Wall time is left out so that the text only
/// depends on the scenario and seed.
pub fn format_metrics(res: &EpisodeResult) -> String {
    let m = &res.metrics;
    let mut s = String::new();
    let mut kv = |k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("outcome", &res.outcome.label());
    if let Some(t) = res.outcome.time() {
        kv("failure_time", &t);
        kv("failure", &res.outcome);
    }
    kv("samples", &m.samples);
    kv("triggers", &m.triggers);
    kv("reduction", &m.reduction);
    kv("satisfied", &m.satisfied);
    kv("rho_theta", &m.rho_theta);
    kv("rho_theta_smooth", &m.rho_theta_smooth);
    kv("min_funnel_margin", &m.min_funnel_margin);
    kv("max_law_gap", &m.max_law_gap);
    kv("law_gap_violations", &m.law_gap_violations);
    kv("min_inter_event", &m.min_inter_event);
    kv("min_delta", &m.min_delta);
    kv("min_gram_eigenvalue", &m.min_gram_eigenvalue);
    kv("duration", &m.duration);
    for (k, j) in res.jumps.iter().enumerate() {
        kv(&format!("jump.{}.t", k + 1), &j.t);
        kv(&format!("jump.{}.rho", k + 1), &j.rho);
    }
    for (k, syn) in res.syntheses.iter().enumerate() {
        let p = &syn.params;
        let key = |name: &str| format!("task.{}.{name}", k + 1);
        kv(&key("rho0"), &syn.rho0);
        kv(&key("rho_opt"), &syn.rho_opt);
        kv(&key("chi"), &syn.chi);
        kv(&key("t_star"), &p.t_star);
        kv(&key("r"), &p.r);
        kv(&key("rho_max"), &p.rho_max);
        kv(&key("gamma0"), &p.perf.gamma0);
        kv(&key("gamma_inf"), &p.perf.gamma_inf);
        kv(&key("l"), &p.perf.l);
    }
    s
}
