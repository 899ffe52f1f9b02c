use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use netlab::audit::{self, audit_table, fixtures, lag_sum_diagnostic, risk_increase_fit, AuditReport, EstimateRecord};
use netlab::consistency::{
    compatibility_search, cyclic_identity_residual, linear_overdetermination, multinaming_violations, ChainConfig,
    PersonContext, ReciprocalConfig,
};
use netlab::gee::{fit, wald_ci_coef, FitOptions, FitResult};
use netlab::generators::{dominance_check, gen_cohort, nn_ball_experiment, sparsity, GeneratorConfig, Mechanism};
use netlab::modelspec::{build_design_for_selector, DesignMatrix, ModelParams};
use netlab::netpanel::{load_panel_dir, CohortPanel, TieClass, TieKind, TieSelector, TraitKind};
use netlab::permnet::{associations_csv, permutation_test, PermOptions};
use netlab::plot::{bar_chart, cdf_plot, forest_plot, Bar, ForestGroup, Interval};
use serde_json::{json, Value};

use crate::args::*;
use crate::output::{invalid, Outputs, RunConfig};

pub fn run(rc: &RunConfig) -> Result<Outputs> {
    match &rc.command {
        Command::Simulate(a) => simulate(rc, a),
        Command::Nnball(a) => nnball(rc, a),
        Command::Fit(a) => fit_cmd(rc, a),
        Command::Permtest(a) => permtest(rc, a),
        Command::CheckModel(a) => check_model(rc, a),
        Command::Audit(a) => audit_cmd(rc, a),
        Command::Design {
            action: DesignCommand::Export(a),
        } => design_export(a),
        Command::Repro(a) => repro(rc, a),
    }
}

fn load(p: &PanelArgs) -> Result<CohortPanel> {
    load_panel_dir(&p.panel, p.trait_kind).map_err(invalid)
}

fn add_panel(out: &mut Outputs, prefix: &str, panel: &CohortPanel) {
    out.add(format!("{prefix}persons.csv"), panel.persons_csv());
    out.add(format!("{prefix}exams.csv"), panel.exams_csv());
    out.add(format!("{prefix}ties.csv"), panel.ties_csv());
}

fn simulate_into(rc: &RunConfig, cfg: &GeneratorConfig, prefix: &str, out: &mut Outputs) -> Result<CohortPanel> {
    let (panel, truth) = gen_cohort(cfg).map_err(invalid)?;
    add_panel(out, prefix, &panel);
    let sparse: Vec<Value> = panel
        .waves()
        .into_iter()
        .map(|w| {
            let s = sparsity(&panel, w);
            json!({"wave": w, "fp_naming_fraction": s.fp_naming_fraction, "friends_per_fp": s.friends_per_fp})
        })
        .collect();
    out.add_json(
        format!("{prefix}ground_truth.json"),
        &json!({
            "run_config": rc.json(),
            "mechanism": truth.mechanism,
            "seed": cfg.seed,
            "true_induction_coefficient": truth.true_induction_coefficient,
            "generator_config": cfg,
            "sparsity": sparse,
            "n_true_namings": truth.true_namings.len(),
            "latent": truth.latent,
        }),
    );
    let s1 = sparsity(&panel, 1);
    out.say(format!(
        "simulated {} persons over {} waves ({} mechanism); wave 1: {:.1}% of FPs name a recorded friend, {:.2} recorded friends per FP",
        panel.n_persons(),
        cfg.n_waves,
        cfg.mechanism.as_str(),
        100.0 * s1.fp_naming_fraction,
        s1.friends_per_fp
    ));
    Ok(panel)
}

fn simulate(rc: &RunConfig, a: &SimulateArgs) -> Result<Outputs> {
    let mut out = Outputs::default();
    simulate_into(rc, &a.generator_config(rc.seed), "", &mut out)?;
    Ok(out)
}

fn nnball(rc: &RunConfig, a: &NnballArgs) -> Result<Outputs> {
    if a.n < 2 || a.dim == 0 || a.replicates == 0 {
        return Err(invalid("nnball needs n >= 2, dim >= 1 and replicates >= 1"));
    }
    let samples = nn_ball_experiment(a.n, a.dim, a.replicates, rc.seed);
    let report = dominance_check(&samples, a.grid, a.n_perms, rc.seed).map_err(invalid)?;
    let mut out = Outputs::default();
    let mut csv = String::from("kind,distance\n");
    for d in &samples.mutual {
        csv.push_str(&format!("mutual,{d}\n"));
    }
    for d in &samples.nonmutual {
        csv.push_str(&format!("nonmutual,{d}\n"));
    }
    out.add("distances.csv", csv);
    out.add_json("dominance.json", &json!({"run_config": rc.json(), "dominance": report}));
    out.add(
        "cdf.svg",
        cdf_plot(
            &format!("Nearest-neighbour distances, n = {}, dim = {}", a.n, a.dim),
            &[("mutual", &samples.mutual), ("one-way", &samples.nonmutual)],
            "distance",
            &rc.json_string(),
        ),
    );
    out.say(format!(
        "{} mutual pairs, {} one-way namings; min_d F_mutual - F_oneway = {:.4} (tolerance {:.4}); D+ = {:.4}, permutation p = {:.4}; dominance {}",
        report.n_mutual,
        report.n_nonmutual,
        report.grid_min_diff,
        report.tolerance,
        report.statistic,
        report.p_value,
        if report.dominance_holds { "holds" } else { "rejected" }
    ));
    Ok(out)
}

fn selector(class: Option<TieClass>, s: &SelectorArgs) -> TieSelector {
    TieSelector {
        kind: if s.any_kind { None } else { Some(TieKind::Friend) },
        class,
        persistent: !s.transient,
    }
}

fn class_name(class: Option<TieClass>) -> &'static str {
    class.map_or("all", |c| c.as_str())
}

fn class_label(class: Option<TieClass>) -> &'static str {
    class.map_or("all ties", |c| c.label())
}

fn require_lag(panel: &CohortPanel) -> Result<()> {
    if panel.waves().iter().any(|&w| w >= 2 && panel.has_wave(w - 1)) {
        Ok(())
    } else {
        Err(invalid(
            "lagged traits are unavailable: the panel has no wave whose previous wave is also present",
        ))
    }
}

struct ClassFit {
    class: Option<TieClass>,
    outcome: std::result::Result<(FitResult, DesignMatrix), String>,
}

fn fit_classes(
    panel: &CohortPanel,
    classes: &[Option<TieClass>],
    sel: &SelectorArgs,
    opts: &FitOptions,
) -> Result<Vec<ClassFit>> {
    require_lag(panel)?;
    let mut fits = Vec::new();
    for &class in classes {
        let outcome = build_design_for_selector(panel, &selector(class, sel))
            .map_err(|e| e.to_string())
            .and_then(|d| fit(&d, opts).map(|f| (f, d)).map_err(|e| e.to_string()));
        fits.push(ClassFit { class, outcome });
    }
    Ok(fits)
}

fn fit_outputs(rc: &RunConfig, fits: &[ClassFit], sel: &SelectorArgs, level: f64, out: &mut Outputs) -> Result<()> {
    let mut csv = String::from("tie_class,n_rows,n_clusters,beta1,robust_se,low,high,converged,error\n");
    let mut items = Vec::new();
    for cf in fits {
        let name = class_name(cf.class);
        match &cf.outcome {
            Ok((f, design)) => {
                let (lo, hi) = wald_ci_coef(f, "beta1", level).map_err(invalid)?;
                let se = f.robust_se_of("beta1").map_err(invalid)?;
                let risk = match f.family {
                    netlab::modelspec::Family::LogitBinary => {
                        Some(risk_increase_fit(f, design, level).map_err(invalid)?)
                    }
                    netlab::modelspec::Family::LinearCount => None,
                };
                out.add_json(
                    format!("fit_{}.json", name.replace('-', "_")),
                    &json!({
                        "run_config": rc.json(),
                        "tie_class": name,
                        "selector": selector(cf.class, sel),
                        "level": level,
                        "fit": f,
                        "beta1_wald_ci": [lo, hi],
                        "risk_increase": risk,
                        "lag_sum": lag_sum_diagnostic(f),
                    }),
                );
                csv.push_str(&format!(
                    "{name},{},{},{},{se},{lo},{hi},{},\n",
                    f.n_rows, f.n_clusters, f.params.beta1, f.converged
                ));
                items.push(Interval {
                    label: class_label(cf.class).into(),
                    estimate: f.params.beta1,
                    low: lo,
                    high: hi,
                });
                let risk_txt = risk.map_or(String::new(), |r| {
                    format!(
                        "; risk increase at mean covariates {:.1}% [{:.1}%, {:.1}%]",
                        r.percent, r.interval.0, r.interval.1
                    )
                });
                out.say(format!(
                    "{:<8} beta1 = {:.4} (robust SE {:.4}) CI [{:.4}, {:.4}], {} rows in {} clusters{}{}",
                    class_label(cf.class),
                    f.params.beta1,
                    se,
                    lo,
                    hi,
                    f.n_rows,
                    f.n_clusters,
                    if f.converged { "" } else { ", NOT CONVERGED" },
                    risk_txt
                ));
            }
            Err(e) => {
                csv.push_str(&format!("{name},,,,,,,,\"{}\"\n", e.replace('"', "'")));
                out.say(format!("{:<8} not fitted: {e}", class_label(cf.class)));
            }
        }
    }
    if items.is_empty() {
        return Err(invalid(format!(
            "no tie class could be fitted ({})",
            fits.iter()
                .filter_map(|f| f.outcome.as_ref().err().cloned())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    out.add("fits.csv", csv);
    out.add(
        "forest.svg",
        forest_plot(
            "Alter-trait coefficient by tie class",
            &[ForestGroup {
                label: "simulated panel".into(),
                items,
            }],
            &format!("beta1 with {:.0}% Wald interval", 100.0 * level),
            &rc.json_string(),
        ),
    );
    Ok(())
}

fn fit_opts(a: &FitArgs) -> FitOptions {
    FitOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        cluster_correction: a.cluster_correction,
    }
}

fn classes_for(choice: ClassChoice) -> Vec<Option<TieClass>> {
    match choice.class() {
        None => TieClass::ALL.iter().copied().map(Some).collect(),
        Some(c) => vec![Some(c)],
    }
}

fn fit_cmd(rc: &RunConfig, a: &FitArgs) -> Result<Outputs> {
    let panel = load(&a.panel)?;
    let fits = fit_classes(&panel, &classes_for(a.tie_class), &a.selector, &fit_opts(a))?;
    if a.tie_class != ClassChoice::All {
        if let Some(Err(e)) = fits.first().map(|f| &f.outcome) {
            return Err(invalid(e));
        }
    }
    let mut out = Outputs::default();
    fit_outputs(rc, &fits, &a.selector, a.level, &mut out)?;
    Ok(out)
}

fn permtest(rc: &RunConfig, a: &PermtestArgs) -> Result<Outputs> {
    let panel = load(&a.panel)?;
    let wave = match a.wave {
        Some(w) => w,
        None => *panel.waves().last().ok_or_else(|| invalid("panel has no exams"))?,
    };
    let opts = PermOptions {
        directed: a.directed,
        count_threshold: a.threshold,
    };
    let rows = permutation_test(&panel, wave, a.max_degree, a.n_perms, rc.seed, &opts).map_err(invalid)?;
    let mut out = Outputs::default();
    out.add("permtest.csv", associations_csv(&rows));
    out.add_json(
        "permtest.json",
        &json!({"run_config": rc.json(), "wave": wave, "options": opts, "degrees": rows,
                "note": "perm_interval is a percentile band of trait-shuffled replicates, not a confidence interval; null marks an unbounded end"}),
    );
    let bars: Vec<Bar> = rows
        .iter()
        .map(|r| Bar {
            label: format!("degree {}", r.degree),
            value: r.rel_increase,
            interval: Some(r.perm_interval),
        })
        .collect();
    out.add(
        "permtest.svg",
        bar_chart(
            &format!("Relative increase over shuffled traits, wave {wave}"),
            &bars,
            "observed / shuffled - 1",
            &rc.json_string(),
        ),
    );
    for r in &rows {
        out.say(format!(
            "degree {}: q = {:.4}, shuffled mean {:.4}, relative increase {:+.1}% (permutation interval {:+.1}% to {:+.1}%), {} pairs",
            r.degree,
            r.observed,
            r.perm_mean,
            100.0 * r.rel_increase,
            100.0 * r.perm_interval.0,
            100.0 * r.perm_interval.1,
            r.n_pairs
        ));
    }
    if rows.is_empty() {
        out.say("no degree was computable");
    }
    Ok(out)
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{} is not valid JSON: {e}", path.display())))
}

fn load_params(rc: &RunConfig, a: &CheckModelArgs) -> Result<(ModelParams, String)> {
    if let Some(p) = &a.params {
        let v = read_json(p)?;
        let params: ModelParams = serde_json::from_value(v).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
        return Ok((params, p.display().to_string()));
    }
    let path = a.fit.clone().unwrap_or_else(|| rc.out.join("fit_mutual.json"));
    if !path.exists() {
        return Err(invalid(format!(
            "no parameters given and {} does not exist; pass --params or --fit, or run `fit` first",
            path.display()
        )));
    }
    let v = read_json(&path)?;
    let fit_value = v.get("fit").cloned().unwrap_or(v);
    let f: FitResult = serde_json::from_value(fit_value).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok((f.params, path.display().to_string()))
}

fn ctx(lag: f64, age: f64, female: bool, education: f64) -> PersonContext {
    PersonContext {
        lagged_trait: lag,
        age,
        female,
        education,
    }
}

fn check_model(rc: &RunConfig, a: &CheckModelArgs) -> Result<Outputs> {
    if !(2..=7).contains(&a.wave) {
        return Err(invalid("--wave must be in 2..=7"));
    }
    let (params, source) = load_params(rc, a)?;
    if !params.is_finite() {
        return Err(invalid("parameters must be finite"));
    }
    let mut out = Outputs::default();
    out.say(format!(
        "parameters from {source}: beta1 = {}, beta2 = {}",
        params.beta1, params.beta2
    ));

    let chain = ChainConfig {
        wave: a.wave,
        i: ctx(1.0, 55.0, true, 12.0),
        k: ctx(0.0, 48.0, false, 14.0),
        m: ctx(1.0, 60.0, true, 10.0),
        m_current: 1.0,
    };
    let residual = cyclic_identity_residual(&params, &chain);
    out.say(format!(
        "[cyclic identity] LHS - RHS = {residual:.12} (equals beta1; a consistent model needs 0)"
    ));
    let search = compatibility_search(&params, &chain, a.grid).map_err(invalid)?;
    out.say(format!(
        "[joint compatibility] smallest max log-odds mismatch over joint laws of (Y_i, Y_k): {:.6}",
        search.gap
    ));

    let mut linear = Vec::new();
    let mut n_inconsistent = 0;
    for mask in 0..8u8 {
        let lag = |b: u8| ((mask >> b) & 1) as f64;
        let cfg = ReciprocalConfig {
            wave: a.wave,
            i: ctx(lag(0), 55.0, true, 12.0),
            j: ctx(lag(1), 48.0, false, 14.0),
            k: ctx(lag(2), 60.0, true, 10.0),
        };
        match linear_overdetermination(&params, &cfg) {
            Ok(r) => {
                n_inconsistent += !r.consistent as usize;
                linear.push(json!({"lags": [lag(0), lag(1), lag(2)], "report": r}));
            }
            Err(e) => linear.push(json!({"lags": [lag(0), lag(1), lag(2)], "error": e.to_string()})),
        }
    }
    out.say(format!(
        "[linear overdetermination] {n_inconsistent} of 8 lag configurations leave the 4 equations in 3 unknowns without a solution"
    ));

    let mut violations = Value::Null;
    if let Some(dir) = &a.panel {
        let panel = load_panel_dir(dir, a.trait_kind).map_err(invalid)?;
        require_lag(&panel)?;
        let sel = TieSelector {
            kind: None,
            class: None,
            persistent: false,
        };
        let design = build_design_for_selector(&panel, &sel).map_err(invalid)?;
        let with_params = multinaming_violations(&design, &params, a.tol);
        let witness = ModelParams {
            beta1: 1.0,
            beta2: 0.0,
            ..Default::default()
        };
        let raw = multinaming_violations(&design, &witness, a.tol);
        out.say(format!(
            "[multi-naming] {} of {} (FP, wave) groups with several alters violate the single-alter constraint; {} groups have alters with different current traits",
            with_params.n_violations, with_params.n_groups, raw.n_violations
        ));
        violations = json!({"with_params": with_params, "data_witnesses": raw});
    }

    let report = json!({
        "run_config": rc.json(),
        "params": params,
        "params_source": source,
        "cyclic_identity": {"chain": chain, "residual": residual},
        "joint_compatibility": {"grid": a.grid, "search": search},
        "linear_overdetermination": linear,
        "multinaming": violations,
    });
    for (k, v) in report.as_object().expect("object") {
        if k != "run_config" {
            out.say(format!("{k}: {}", serde_json::to_string(v).expect("json")));
        }
    }
    out.add_json("check_model.json", &report);
    Ok(out)
}

fn audit_outputs(rc: &RunConfig, records: &[EstimateRecord], report: &AuditReport, out: &mut Outputs) {
    out.add("records.csv", audit::records_csv(records));
    out.add("verdicts.csv", audit::verdicts_csv(report));
    out.add_json("audit.json", &json!({"run_config": rc.json(), "report": report}));
    for (file, coef_scale) in [("forest.svg", true), ("forest_percent.svg", false)] {
        let mut groups: Vec<ForestGroup> = Vec::new();
        for r in records {
            if matches!(r.estimate, audit::Estimate::Coef { .. }) != coef_scale {
                continue;
            }
            let (low, high) = r.ci(report.level);
            let item = Interval {
                label: r.label.clone(),
                estimate: r.point(),
                low,
                high,
            };
            match groups.iter_mut().find(|g| g.label == r.group) {
                Some(g) => g.items.push(item),
                None => groups.push(ForestGroup {
                    label: r.group.clone(),
                    items: vec![item],
                }),
            }
        }
        if !groups.is_empty() {
            let axis = if coef_scale { "coefficient" } else { "percent" };
            out.add(
                file,
                forest_plot("Reported estimates and intervals", &groups, axis, &rc.json_string()),
            );
        }
    }
    for p in &report.pairs {
        let v = &p.verdict;
        let zp = match (v.z, v.p) {
            (Some(z), Some(pv)) => format!(", z = {z:.3}, p = {pv:.3}"),
            _ => String::new(),
        };
        let flags: Vec<&str> = p.flags.iter().map(|f| f.as_str()).collect();
        out.say(format!(
            "{}: {} vs {}: overlap {}{}, distinguishable {}{}",
            p.group,
            p.first,
            p.second,
            v.overlap,
            zp,
            v.distinguishable,
            if flags.is_empty() {
                String::new()
            } else {
                format!(" [{}]", flags.join(", "))
            }
        ));
    }
    for s in &report.singles {
        let flags: Vec<&str> = s.flags.iter().map(|f| f.as_str()).collect();
        out.say(format!(
            "{}: {} reported as null, CI [{}, {}]{}",
            s.group,
            s.label,
            s.ci.0,
            s.ci.1,
            if flags.is_empty() {
                String::new()
            } else {
                format!(" [{}]", flags.join(", "))
            }
        ));
    }
}

fn audit_cmd(rc: &RunConfig, a: &AuditArgs) -> Result<Outputs> {
    let records = match (&a.fixtures, &a.records) {
        (Some(f), _) => fixtures::by_name(f.name()).expect("bundled fixture"),
        (None, Some(path)) => {
            let file = fs::File::open(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
            audit::read_records(file).map_err(invalid)?
        }
        (None, None) => return Err(invalid("pass --fixtures or --records")),
    };
    let report = audit_table(&records, a.level, a.near_zero).map_err(invalid)?;
    let mut out = Outputs::default();
    audit_outputs(rc, &records, &report, &mut out);
    Ok(out)
}

fn design_export(a: &ExportArgs) -> Result<Outputs> {
    let panel = load(&a.panel)?;
    require_lag(&panel)?;
    let design = build_design_for_selector(&panel, &selector(a.tie_class.class(), &a.selector)).map_err(invalid)?;
    let mut out = Outputs::default();
    out.say(format!("{} design rows", design.len()));
    out.add("design.csv", design.to_csv());
    Ok(out)
}

fn repro(rc: &RunConfig, a: &ReproArgs) -> Result<Outputs> {
    let cfg = GeneratorConfig {
        mechanism: Mechanism::Homophily,
        n_persons: a.n_persons,
        n_waves: a.n_waves,
        dim: a.dim,
        naming_rate: 1.0,
        observability: 1.0,
        mechanism_strength: a.strength,
        persistence: a.persistence,
        trait_kind: TraitKind::Binary,
        seed: rc.seed,
        ..Default::default()
    };
    let mut out = Outputs::default();
    let panel = simulate_into(rc, &cfg, "panel/", &mut out)?;
    let sel = SelectorArgs {
        any_kind: false,
        transient: false,
    };
    let classes: Vec<Option<TieClass>> = TieClass::ALL.iter().copied().map(Some).collect();
    let fits = fit_classes(&panel, &classes, &sel, &FitOptions::default())?;
    fit_outputs(rc, &fits, &sel, a.level, &mut out)?;

    let group = "simulated homophily".to_string();
    let mut records = Vec::new();
    let mut betas = Vec::new();
    for cf in &fits {
        if let Ok((f, _)) = &cf.outcome {
            let se = f.robust_se_of("beta1").map_err(invalid)?;
            records.push(EstimateRecord::coef(&group, class_label(cf.class), f.params.beta1, se).map_err(invalid)?);
            betas.push(f.params.beta1);
        }
    }
    let report = audit_table(&records, a.level, audit::DEFAULT_NEAR_ZERO_FRACTION).map_err(invalid)?;
    let mut audit_out = Outputs::default();
    audit_outputs(rc, &records, &report, &mut audit_out);
    for (name, bytes) in audit_out.files {
        let name = name.to_string_lossy().to_string();
        if name == "forest.svg" || name == "forest_percent.svg" {
            continue;
        }
        out.add(format!("audit_{name}"), bytes);
    }
    out.report.push_str(&audit_out.report);
    if betas.len() == 3 {
        let ordered = betas[0] > betas[1] && betas[1] > betas[2];
        out.say(format!(
            "true induction coefficient is 0; estimated ordering mutual > FP->LP > LP->FP {}",
            if ordered { "holds" } else { "does not hold in this draw" }
        ));
    }
    Ok(out)
}

/// Reads a `run_config.json` written by an earlier run.
pub fn read_run_config(path: &Path) -> Result<RunConfig> {
    let v = read_json(path)?;
    serde_json::from_value(v)
        .with_context(|| format!("{} is not a run configuration", path.display()))
        .map_err(invalid)
}
