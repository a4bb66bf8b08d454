use std::collections::BTreeSet;

use fso_relay::capacity::{compare_modes, ergodic_capacity_with, sweep, Estimator, LogBase, Placement};
use fso_relay::channel::TripleHop;
use fso_relay::relay::{apply_detector, detector_input_params, thermal_noise_variance};
use fso_relay::{build_hop, destination_stats, SystemParams, VarianceMode};
use serde_json::json;

use crate::output::{sci, Table};
use crate::CliError;

/// Rendered output of one subcommand.
pub struct Report {
    pub text: String,
    pub arguments: serde_json::Value,
    pub summary: Option<serde_json::Value>,
}

fn capacity_column(base: LogBase) -> &'static str {
    match base {
        LogBase::Bits => "capacity_bits",
        LogBase::Nats => "capacity_nats",
    }
}

pub fn link_budget(params: &SystemParams, distances: &[f64]) -> Result<Report, CliError> {
    let mut hops = Table::new(&["hop", "d_m", "xi_per_m", "path_loss", "rytov_var", "mu_l", "sigma2_l"]);
    for (i, &d) in distances.iter().enumerate() {
        let h = build_hop(d, params).map_err(CliError::Domain)?;
        hops.row([
            (i + 1).to_string(),
            sci(h.distance),
            sci(h.xi),
            sci(h.path_loss),
            sci(h.rytov_var),
            sci(h.mu_l),
            sci(h.sigma2_l),
        ]);
    }
    let mut budget = Table::new(&["quantity", "value"]);
    for (name, v) in [
        ("m_s", params.m_s),
        ("m_r1", params.m_r1),
        ("m_r2", params.m_r2),
        ("m_br1", params.m_br1),
        ("m_br2", params.m_br2),
        ("m_bd", params.m_bd),
        ("var_thermal", thermal_noise_variance(params)),
    ] {
        budget.row([name.to_string(), sci(v)]);
    }
    Ok(Report {
        text: format!("{}\n{}", hops.into_string(), budget.into_string()),
        arguments: json!({ "distances_m": distances }),
        summary: None,
    })
}

pub fn snr(params: &SystemParams, placement: Placement, mode: VarianceMode) -> Result<Report, CliError> {
    placement.validate(params.d_sd).map_err(CliError::Domain)?;
    let hops = TripleHop::new(placement.d_sr, placement.d_rr, placement.d_rd, params).map_err(CliError::Domain)?;
    let fading = hops.mean_fading();
    let stats = destination_stats(&fading, params, mode).map_err(CliError::from_compute)?;
    let detected = apply_detector(&detector_input_params(&fading, params).map_err(CliError::from_compute)?, params.eta);

    let mut t = Table::new(&["quantity", "value"]);
    let mut put = |k: &str, v: f64| t.row([k.to_string(), sci(v)]);
    put("d_sr_m", placement.d_sr);
    put("d_rr_m", placement.d_rr);
    put("d_rd_m", placement.d_rd);
    put("g1", stats.gains.g1);
    put("g2", stats.gains.g2);
    put("a_detected", detected.a);
    put("b_detected", detected.b);
    put("mean", stats.mean);
    put("var_signal", stats.var_signal);
    put("var_thermal", stats.var_thermal);
    put("var_total", stats.var_total);
    put("snr", stats.snr);
    put("snr_db", 10.0 * stats.snr.log10());
    for (i, term) in stats.breakdown.0.iter().enumerate() {
        put(&format!("printed_term_{}", i + 1), *term);
    }
    Ok(Report {
        text: t.into_string(),
        arguments: json!({ "placement_m": placement }),
        summary: None,
    })
}

pub fn capacity(params: &SystemParams, placement: Placement, est: &Estimator) -> Result<Report, CliError> {
    let c = ergodic_capacity_with(placement, params, est, &est.draws()).map_err(CliError::from_compute)?;
    let unit = est.base.unit();
    let mut t = Table::new(&[
        "d_sr_m",
        "d_rr_m",
        "d_rd_m",
        "mode",
        capacity_column(est.base),
        "std_error",
        "n_samples",
        &format!("throughput_{unit}_per_s"),
    ]);
    t.row([
        sci(placement.d_sr),
        sci(placement.d_rr),
        sci(placement.d_rd),
        c.mode.to_string(),
        sci(c.mean),
        sci(c.std_error),
        c.n_samples.to_string(),
        sci(c.per_second(params.symbol_rate)),
    ]);
    Ok(Report {
        text: t.into_string(),
        arguments: json!({ "placement_m": placement, "samples": est.n_samples, "base": est.base }),
        summary: None,
    })
}

pub fn sweep_grid(params: &SystemParams, step: f64, est: &Estimator) -> Result<Report, CliError> {
    let r = sweep(params, step, est).map_err(CliError::from_compute)?;
    let mut t = Table::new(&["d_sr_m", "d_rr_m", "d_rd_m", capacity_column(est.base), "std_error"]);
    for p in r.points.iter().chain(std::iter::once(&r.optimum)) {
        t.row([sci(p.d_sr), sci(p.d_rr), sci(p.d_rd), sci(p.estimate.mean), sci(p.estimate.std_error)]);
    }
    let o = &r.optimum;
    log::info!(
        "optimum at d_sr = {} m, d_rr = {} m, d_rd = {} m: {:.6} {}",
        o.d_sr,
        o.d_rr,
        o.d_rd,
        o.estimate.mean,
        est.base.unit()
    );
    Ok(Report {
        text: t.into_string(),
        arguments: json!({ "step_m": step, "samples": est.n_samples, "base": est.base, "pb_w": params.p_bg_dest }),
        summary: Some(json!({
            "optimum_m": [o.d_sr, o.d_rr, o.d_rd],
            "capacity": o.estimate.mean,
            "points": r.points.len(),
        })),
    })
}

pub struct ValidateArgs {
    pub pb_list: Vec<f64>,
    pub modes: Vec<VarianceMode>,
    pub step: f64,
    pub samples: usize,
    pub seed: u64,
    pub base: LogBase,
    pub threshold: f64,
}

pub fn validate(params: &SystemParams, args: &ValidateArgs) -> Result<Report, CliError> {
    let mut pbs = args.pb_list.clone();
    pbs.sort_by(f64::total_cmp);
    pbs.dedup();
    let modes: Vec<VarianceMode> = args.modes.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if !(args.step > 0.0 && args.step < params.d_sd) {
        return Err(CliError::Domain(fso_relay::Error::Geometry(format!(
            "d_rd step {} m leaves no point inside the {} m link",
            args.step, params.d_sd
        ))));
    }
    let grid: Vec<f64> = (1..)
        .map(|k| k as f64 * args.step)
        .take_while(|&d| d < params.d_sd)
        .collect();

    let mut t = Table::new(&["d_rd_m", "p_b_w", "mode", capacity_column(args.base), "std_error"]);
    let mut gaps = Vec::new();
    for &pb in &pbs {
        let p = params.with_background_power(pb).map_err(CliError::Config)?;
        let rows = compare_modes(&p, &grid, &modes, args.samples, args.seed, args.base).map_err(CliError::from_compute)?;
        let mut max_gap: Option<f64> = None;
        for group in rows.chunks(modes.len()) {
            for r in group {
                t.row([sci(r.d_rd), sci(pb), r.mode.to_string(), sci(r.estimate.mean), sci(r.estimate.std_error)]);
            }
            let find = |m| group.iter().find(|r| r.mode == m).map(|r| r.estimate.mean);
            if let (Some(lo), Some(co)) = (find(VarianceMode::LowBackground), find(VarianceMode::MomentComposition)) {
                let gap = ((lo - co) / co).abs();
                max_gap = Some(max_gap.map_or(gap, |g: f64| g.max(gap)));
            }
        }
        if let Some(g) = max_gap {
            let ok = g <= args.threshold;
            log::info!("P_b = {pb:e} W: max low-background gap {g:.4e} ({})", if ok { "within threshold" } else { "exceeds threshold" });
            gaps.push(json!({ "p_b_w": pb, "max_low_bg_relative_gap": g, "within_threshold": ok }));
        }
    }
    Ok(Report {
        text: t.into_string(),
        arguments: json!({
            "pb_list_w": pbs,
            "modes": modes.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            "step_m": args.step,
            "samples": args.samples,
            "base": args.base,
            "threshold": args.threshold,
        }),
        summary: Some(json!({ "low_bg_gaps": gaps })),
    })
}
