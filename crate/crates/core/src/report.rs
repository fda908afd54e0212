//! Plain-text and CSV rendering of analysis reports.
//!
//! Every CSV starts with a `# schema` tag line followed by the header row, so
//! downstream readers can detect column changes.  All builders return strings;
//! file placement and flushing belong to the caller.

use crate::bundle::BundleReport;
use crate::chern::CharacteristicReport;
use crate::solver::{Continuation, Outcome, SolverTrace, SweepReport};
use crate::stability::{ListVerdict, ProbeOutcome, ProbeReport, StabilityVerdict};
use crate::twist::TwistReport;

pub const SCHEMA_VERSION: &str = "heflow-csv 1";

fn tag() -> String {
    format!("# schema {SCHEMA_VERSION}\n")
}

/// RFC-4180 style quoting, applied only when the field needs it.
pub fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn outcome_label(o: Outcome) -> &'static str {
    match o {
        Outcome::Converged => "converged",
        Outcome::Plateau => "plateau",
        Outcome::IterationLimit => "iteration-limit",
    }
}

pub fn continuation_label(c: Continuation) -> &'static str {
    match c {
        Continuation::Converging => "converging",
        Continuation::Obstructed => "obstructed",
    }
}

pub fn verdict_label(v: ListVerdict) -> &'static str {
    match v {
        ListVerdict::StableAgainstList => "stable-against-list",
        ListVerdict::SemistableAgainstList => "semistable-against-list",
        ListVerdict::Destabilized => "destabilized",
    }
}

/// Per-iteration history of one ε-solve.  Row 0 is the initial iterate and
/// carries no step size; each later row is one accepted step.
pub fn trace_csv(trace: &SolverTrace) -> String {
    let mut out = tag();
    out.push_str("iter,epsilon,residual,max_log_h,det_drift,step_size\n");
    for i in 0..trace.residuals.len() {
        let step = if i == 0 { String::new() } else { trace.step_sizes[i - 1].to_string() };
        out.push_str(&format!(
            "{i},{},{},{},{},{step}\n",
            trace.epsilon, trace.residuals[i], trace.max_logs[i], trace.det_drifts[i]
        ));
    }
    out
}

/// One row per ε in the sweep; solves that errored out get an `error` row
/// with the numeric columns left empty.
pub fn summary_csv(sweep: &SweepReport) -> String {
    let mut out = tag();
    out.push_str(
        "epsilon,outcome,accepted,rejected,final_residual,phi_residual,max_log_h,det_drift,\
         bound2_slack,energy_defect,energy_tol\n",
    );
    for run in &sweep.runs {
        let t = &run.trace;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            t.epsilon,
            outcome_label(t.outcome),
            t.residuals.len() - 1,
            t.rejected,
            t.residuals.last().copied().unwrap_or(f64::NAN),
            t.phi_residual,
            t.max_log_h,
            t.det_drift,
            opt(t.log_bounds.as_ref().map(|b| b.bound2_slack)),
            opt(t.energy.as_ref().map(|e| e.defect)),
            opt(t.energy.as_ref().map(|e| e.tol)),
        ));
    }
    for (eps, _) in &sweep.errors {
        out.push_str(&format!("{eps},error,,,,,,,,,\n"));
    }
    out
}

/// One characteristic-number row per metric.
pub struct ChernRow<'a> {
    pub experiment: &'a str,
    pub report: &'a CharacteristicReport,
    /// |discriminant − norm decomposition| when the split was computed.
    pub decomposition_defect: Option<f64>,
}

pub fn chern_csv(rows: &[ChernRow]) -> String {
    let mut out = tag();
    out.push_str("experiment,metric,degree,slope,bogomolov,decomposition_defect\n");
    for row in rows {
        let r = row.report;
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_quote(row.experiment),
            csv_quote(&r.metric_id),
            r.degree,
            r.slope,
            opt(r.bogomolov_number),
            opt(row.decomposition_defect),
        ));
    }
    out
}

pub fn verdict_csv(v: &StabilityVerdict) -> String {
    let mut out = tag();
    out.push_str(
        "candidate,rank,degree,slope,margin,projector_defect,weak_holomorphy_defect,excluded\n",
    );
    for c in &v.candidates {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            csv_quote(&c.label),
            c.rank,
            c.degree,
            c.slope,
            c.margin,
            c.projector_defect,
            c.weak_holomorphy_defect,
            c.excluded,
        ));
    }
    out
}

pub fn probe_csv(p: &ProbeReport) -> String {
    let mut out = tag();
    out.push_str(
        "factor,rank,rank_defect,degree,slope,margin,projector_defect,weak_holomorphy_defect\n",
    );
    for (i, f) in p.factors.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            i + 1,
            f.rank,
            f.rank_defect,
            f.degree,
            f.slope,
            f.margin,
            f.projector_defect,
            f.weak_holomorphy_defect,
        ));
    }
    out
}

pub fn describe_validation(bundle: &BundleReport, twist: Option<&TwistReport>) -> String {
    let mut out = String::from("== gluing data validation ==\n");
    out.push_str(&format!(
        "identity defect   {:12.3e}   (tol {:.1e})\n\
         inverse defect    {:12.3e}\n\
         cocycle defect    {:12.3e}\n\
         dbar defect       {:12.3e}   (tol {:.1e})\n",
        bundle.identity_defect,
        bundle.tol_algebraic,
        bundle.inverse_defect,
        bundle.cocycle_defect,
        bundle.dbar_defect,
        bundle.tol_differential,
    ));
    if let Some(t) = twist {
        out.push_str(&format!(
            "twist differential {:11.3e}\ntwist algebraic    {:11.3e}\n",
            t.max_differential_defect(),
            t.max_algebraic_defect(),
        ));
    }
    let pass = bundle.pass && twist.map(|t| t.pass).unwrap_or(true);
    out.push_str(if pass { "validation: PASS\n" } else { "validation: FAIL\n" });
    out
}

pub fn describe_chern(rows: &[ChernRow]) -> String {
    let mut out = String::from("== characteristic numbers ==\n");
    for row in rows {
        let r = row.report;
        out.push_str(&format!(
            "[{}] degree {:+.6e}  slope {:+.6e}",
            r.metric_id, r.degree, r.slope
        ));
        if let Some(b) = r.bogomolov_number {
            out.push_str(&format!("  discriminant {:+.6e}", b));
        }
        if let Some(d) = row.decomposition_defect {
            out.push_str(&format!("  decomposition defect {:.3e}", d));
        }
        out.push('\n');
    }
    out
}

pub fn describe_sweep(sweep: &SweepReport) -> String {
    let mut out = String::from("== ε-continuation sweep ==\n");
    for run in &sweep.runs {
        let t = &run.trace;
        out.push_str(&format!(
            "ε = {:<8} {:<16} steps {:>4} (+{} rejected)  Φ-residual {:.4e}  \
             max|log h| {:.4e}  det drift {:.2e}\n",
            t.epsilon,
            outcome_label(t.outcome),
            t.residuals.len() - 1,
            t.rejected,
            t.phi_residual,
            t.max_log_h,
            t.det_drift,
        ));
        if let Some(b) = &t.log_bounds {
            out.push_str(&format!(
                "    log-bounds: pointwise defect {:.3e}  (1/ε)·supΦ slack {:+.4e}  \
                 envelope slack {:+.4e} (C needed {:.3})\n",
                b.pointwise_defect, b.bound2_slack, b.bound3_slack, b.required_c,
            ));
        }
        if let Some(e) = &t.energy {
            out.push_str(&format!(
                "    energy identity: lhs {:+.6e}  rhs {:+.6e}  defect {:.3e} (tol {:.3e})  \
                 pairing defect {:.3e}\n",
                e.lhs, e.rhs, e.defect, e.tol, e.pairing_defect,
            ));
        }
    }
    for (eps, msg) in &sweep.errors {
        out.push_str(&format!("ε = {:<8} error: {}\n", eps, msg));
    }
    out.push_str(&format!("continuation: {}\n", continuation_label(sweep.classification)));
    out
}

pub fn describe_verdict(v: &StabilityVerdict) -> String {
    let mut out = String::from("== slope verdicts ==\n");
    out.push_str(&format!(
        "bundle degree {:+.6e}  slope {:+.6e}\n",
        v.bundle_degree, v.bundle_slope
    ));
    for c in &v.candidates {
        out.push_str(&format!(
            "  {:<20} rank {}  slope {:+.6e}  margin {:+.6e}{}\n",
            c.label,
            c.rank,
            c.slope,
            c.margin,
            if c.excluded { "  (full rank, not graded)" } else { "" },
        ));
    }
    out.push_str(&format!("verdict: {}\n", verdict_label(v.verdict)));
    out
}

pub fn describe_probe(p: &ProbeReport) -> String {
    let mut out = String::from("== spectral probe ==\n");
    out.push_str(&format!("‖s‖_L² = {:.4e}\n", p.l2_norm));
    for (i, c) in p.clusters.iter().enumerate() {
        out.push_str(&format!(
            "cluster {}: mean {:+.4f}  spread {:.2e}  multiplicity {}\n",
            i + 1,
            c.mean,
            c.spread,
            c.multiplicity,
        ));
    }
    for (i, f) in p.factors.iter().enumerate() {
        out.push_str(&format!(
            "factor {}: rank {} (defect {:.2e})  degree {:+.4f}  margin {:+.4f}\n",
            i + 1,
            f.rank,
            f.rank_defect,
            f.degree,
            f.margin,
        ));
    }
    out.push_str(&format!("ν = {:+.6e}  (gap-weighted form {:+.6e})\n", p.nu, p.nu_weighted));
    match p.outcome {
        ProbeOutcome::DestabilizerFound => out.push_str("probe: destabilizer found\n"),
        ProbeOutcome::Inconclusive => {
            out.push_str(&format!("probe: inconclusive ({})\n", p.note))
        }
    }
    out
}
