use serde_json::{json, Value};

use timeleak::counter::{bnb_census, extract_reducer, ClassCensus, CounterError, SecretDomain, DEFAULT_BUDGET};
use timeleak::dataset::{
    gen_bl, gen_sort_demo, read_csv, rn_preset, write_csv, FeatureSchema, GroundTruth, RnPreset, TraceDataset,
    DEFAULT_NOISE_STD,
};
use timeleak::network::{self, evaluate, Architecture, TrainConfig};
use timeleak::quantifier::{build_report, initial_entropy_of_sizes, remaining_entropy_of_sizes};
use timeleak::sweep::{partition, sweep_k, SweepResult, SweepSettings};

use crate::args::{AnalyzeArgs, ArchArgs, DataArgs, Family, GenArgs, ReportArgs, SweepArgs, TrainArgs};
use crate::config::FileConfig;
use crate::manifest::{read_bytes, sha256_hex, sibling, write_text, RunManifest, Timings};
use crate::svg::sse_plot;
use crate::{CliError, EXIT_ANALYZE, EXIT_GEN, EXIT_REPORT, EXIT_TRAIN};

/// Default cap when the secret domain is too large to use as the cap.
const FALLBACK_CAP: u64 = 10_000;
const DEFAULT_ROWS: usize = 1000;
const DEFAULT_BL_VARIANTS: usize = 1;
const DEFAULT_BL_N_MAX: i64 = 127;
const DEFAULT_SORT_MAX_LEN: usize = 64;
const DEFAULT_WIDTHS: ([usize; 1], [usize; 1], [usize; 1]) = ([10], [10], [20]);

fn fail(code: u8) -> impl Fn(String) -> CliError {
    move |msg| CliError::new(code, msg)
}

/// Adds `manifest_hash` to a JSON object.
fn stamp(mut v: Value, hash: &str) -> String {
    if let Value::Object(map) = &mut v {
        map.insert("manifest_hash".into(), Value::String(hash.into()));
    }
    serde_json::to_string_pretty(&v).expect("json serializes")
}

fn resolve_preset(name: Option<&String>, code: u8) -> Result<Option<RnPreset>, CliError> {
    name.map(|n| rn_preset(n).ok_or_else(|| CliError::new(code, format!("unknown preset `{n}` (expected R_2 ... R_7)"))))
        .transpose()
}

pub fn gen(a: &GenArgs, f: &FileConfig) -> Result<(), CliError> {
    let err = |e: timeleak::dataset::DatasetError| CliError::new(EXIT_GEN, e.to_string());
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let noise = a.noise.or(f.noise);
    let mut timings = Timings::default();
    let (ds, truth, params): (TraceDataset, Option<GroundTruth>, Value) = match a.family {
        Family::Rn => {
            let preset = resolve_preset(a.preset.as_ref().or(f.preset.as_ref()), EXIT_GEN)?
                .ok_or_else(|| CliError::new(EXIT_GEN, "--family rn needs --preset (R_2 ... R_7)"))?;
            let rows = a.rows.or(f.rows).unwrap_or(preset.rows);
            let noise = noise.unwrap_or(DEFAULT_NOISE_STD);
            let (ds, truth) = timings
                .time("generate", || preset.generate_rows(rows, noise, seed))
                .map_err(err)?;
            (ds, Some(truth), json!({ "family": "rn", "preset": preset.name, "rows": rows, "noise_std": noise }))
        }
        Family::Bl => {
            let i = a.variants.or(f.i).unwrap_or(DEFAULT_BL_VARIANTS);
            let bits = a.bits.or(f.bits).unwrap_or(i + 8);
            let n_max = a.n_max.or(f.n_max).unwrap_or(DEFAULT_BL_N_MAX);
            let rows = a.rows.or(f.rows).unwrap_or(DEFAULT_ROWS);
            let noise = noise.unwrap_or(DEFAULT_NOISE_STD);
            let (ds, truth) = timings
                .time("generate", || gen_bl(i, bits, (1, n_max), rows, noise, seed))
                .map_err(err)?;
            let params = json!({ "family": "bl", "i": i, "bits": bits, "n_max": n_max, "rows": rows, "noise_std": noise });
            (ds, Some(truth), params)
        }
        Family::Sort => {
            if noise.is_some() {
                return Err(CliError::new(EXIT_GEN, "--noise does not apply to the sort family"));
            }
            let max_len = a.max_len.or(f.max_len).unwrap_or(DEFAULT_SORT_MAX_LEN);
            let rows = a.rows.or(f.rows).unwrap_or(DEFAULT_ROWS);
            let ds = timings
                .time("generate", || gen_sort_demo(max_len, rows, seed))
                .map_err(err)?;
            (ds, None, json!({ "family": "sort", "max_len": max_len, "rows": rows }))
        }
    };

    let schema_path = sibling(&a.out, "schema.json");
    let truth_path = sibling(&a.out, "truth.json");
    let manifest_path = sibling(&a.out, "manifest.json");
    let mut m = RunManifest::new("gen", Some(seed), params);
    m.output(&a.out);
    m.output(&schema_path);
    if truth.is_some() {
        m.output(&truth_path);
    }
    let hash = m.hash();

    let mut csv = Vec::new();
    write_csv(&ds, &mut csv).map_err(err)?;
    write_text(&a.out, &String::from_utf8(csv).expect("csv is utf-8"), EXIT_GEN)?;
    let schema_value: Value = serde_json::from_str(&ds.schema.to_json()).expect("schema json");
    write_text(&schema_path, &stamp(schema_value, &hash), EXIT_GEN)?;
    if let Some(t) = &truth {
        let value = json!({
            "class_sizes": t.0,
            "classes": t.0.len(),
            "total": t.total(),
            "se_i": initial_entropy_of_sizes(&t.0),
            "se_o": remaining_entropy_of_sizes(&t.0),
        });
        write_text(&truth_path, &stamp(value, &hash), EXIT_GEN)?;
    }
    m.write(&manifest_path, &timings, EXIT_GEN)?;
    println!("wrote {} rows to {}", ds.len(), a.out.display());
    Ok(())
}

fn load_data(d: &DataArgs, m: &mut RunManifest, code: u8) -> Result<TraceDataset, CliError> {
    let bytes = read_bytes(&d.data, code)?;
    m.input(&d.data, &bytes);
    let schema_path = d.schema.clone().or_else(|| {
        let p = sibling(&d.data, "schema.json");
        p.exists().then_some(p)
    });
    let sidecar = match schema_path {
        Some(p) => {
            let b = read_bytes(&p, code)?;
            m.input(&p, &b);
            let text = String::from_utf8_lossy(&b);
            Some(FeatureSchema::from_json(&text).map_err(|e| CliError::new(code, format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    read_csv(&bytes[..], sidecar.as_ref()).map_err(|e| CliError::new(code, format!("{}: {e}", d.data.display())))
}

struct Resolved {
    arch: Architecture,
    config: TrainConfig,
    preset_k: Option<usize>,
    test_fraction: f64,
}

/// Flags, then the config file, then the preset, then built-in defaults.
fn resolve_arch(a: &ArchArgs, f: &FileConfig, schema: &FeatureSchema) -> Result<Resolved, CliError> {
    let preset = resolve_preset(a.preset.as_ref().or(f.preset.as_ref()), EXIT_TRAIN)?;
    let widths = |flag: &Option<Vec<usize>>, file: &Option<Vec<usize>>, from: fn(&RnPreset) -> &Vec<usize>, dflt: &[usize]| {
        flag.clone()
            .or_else(|| file.clone())
            .or_else(|| preset.as_ref().map(|p| from(p).clone()))
            .unwrap_or_else(|| dflt.to_vec())
    };
    let arch = Architecture {
        k: 0,
        secret_widths: widths(&a.secret_widths, &f.secret_widths, |p| &p.secret_widths, &DEFAULT_WIDTHS.0),
        public_widths: widths(&a.public_widths, &f.public_widths, |p| &p.public_widths, &DEFAULT_WIDTHS.1),
        joint_widths: widths(&a.joint_widths, &f.joint_widths, |p| &p.joint_widths, &DEFAULT_WIDTHS.2),
        n: schema.n_secret(),
        m: schema.n_public(),
    };
    let d = TrainConfig::default();
    let config = TrainConfig {
        learning_rate: a
            .lr
            .or(f.lr)
            .or(preset.as_ref().map(|p| p.learning_rate))
            .unwrap_or(d.learning_rate),
        batch_size: a.batch_size.or(f.batch_size).unwrap_or(d.batch_size),
        max_epochs: a.max_epochs.or(f.max_epochs).unwrap_or(d.max_epochs),
        patience: a.patience.or(f.patience).unwrap_or(d.patience),
        seed: a.seed.or(f.seed).unwrap_or(d.seed),
        ..d
    };
    config.validate().map_err(|e| CliError::new(EXIT_TRAIN, e.to_string()))?;
    let test_fraction = a.test_fraction.or(f.test_fraction).unwrap_or(SweepSettings::default().test_fraction);
    Ok(Resolved {
        arch,
        config,
        preset_k: preset.map(|p| p.k),
        test_fraction,
    })
}

pub fn train(a: &TrainArgs, f: &FileConfig) -> Result<(), CliError> {
    let err = fail(EXIT_TRAIN);
    let mut timings = Timings::default();
    let mut m = RunManifest::new("train", None, Value::Null);
    let ds = timings.time("load", || load_data(&a.data, &mut m, EXIT_TRAIN))?;
    let r = resolve_arch(&a.arch, f, &ds.schema)?;
    let k = a.k.or(f.k).or(r.preset_k).unwrap_or(1);
    let arch = r.arch.with_k(k);
    let settings = SweepSettings::default();
    m.configure(
        Some(r.config.seed),
        json!({ "architecture": arch, "train": r.config, "test_fraction": r.test_fraction, "valid_fraction": settings.valid_fraction }),
    );
    let manifest_path = sibling(&a.out, "manifest.json");
    m.output(&a.out);
    let hash = m.hash();

    let (train_set, valid, test) = partition(&ds, r.test_fraction, settings.valid_fraction, r.config.seed)
        .map_err(|e| err(e.to_string()))?;
    let (net, _) = timings
        .time("train", || network::train(&train_set, &valid, &arch, &r.config))
        .map_err(|e| err(e.to_string()))?;
    let metrics = evaluate(&net, &test).map_err(|e| err(e.to_string()))?;
    write_text(&a.out, &network::to_json(&net, Some(metrics), Some(hash)), EXIT_TRAIN)?;
    m.write(&manifest_path, &timings, EXIT_TRAIN)?;
    println!(
        "k={k} test SSE={:.4} R2={:.4} max residual={:.4} -> {}",
        metrics.sse,
        metrics.r2,
        metrics.max_residual,
        a.out.display()
    );
    Ok(())
}

pub fn sweep(a: &SweepArgs, f: &FileConfig) -> Result<(), CliError> {
    let err = fail(EXIT_TRAIN);
    let mut timings = Timings::default();
    let mut m = RunManifest::new("sweep", None, Value::Null);
    let ds = timings.time("load", || load_data(&a.data, &mut m, EXIT_TRAIN))?;
    let r = resolve_arch(&a.arch, f, &ds.schema)?;
    let d = SweepSettings::default();
    let settings = SweepSettings {
        k_max: a.kmax.or(f.kmax).unwrap_or(d.k_max),
        seeds_per_k: a.seeds_per_k.or(f.seeds_per_k).unwrap_or(d.seeds_per_k),
        tau: a.tau.or(f.tau).unwrap_or(d.tau),
        epsilon: a.epsilon.or(f.epsilon),
        test_fraction: r.test_fraction,
        seed: r.config.seed,
        ..d
    };
    settings.validate().map_err(|e| err(e.to_string()))?;
    m.configure(
        Some(settings.seed),
        json!({ "architecture": r.arch, "train": r.config, "sweep": settings }),
    );
    let out = |name: String| a.out_dir.join(name);
    let model_names: Vec<String> = (0..=settings.k_max).map(|k| format!("model_k{k}.json")).collect();
    for name in ["sweep.json".to_string(), "sse.svg".to_string()].iter().chain(&model_names) {
        m.output(&out(name.clone()));
    }
    let hash = m.hash();

    let (mut result, nets) = timings
        .time("sweep", || sweep_k(&ds, &r.arch, &settings, &r.config))
        .map_err(|e| err(e.to_string()))?;
    result.manifest_hash = Some(hash.clone());
    for ((rec, net), name) in result.records.iter_mut().zip(&nets).zip(&model_names) {
        rec.model_path = Some(name.clone());
        write_text(&out(name.clone()), &network::to_json(net, None, Some(hash.clone())), EXIT_TRAIN)?;
    }
    let sse: Vec<f64> = result.records.iter().map(|rec| rec.test_sse).collect();
    write_text(&out("sweep.json".into()), &result.to_json(), EXIT_TRAIN)?;
    write_text(&out("sse.svg".into()), &sse_plot(&sse, result.chosen_k), EXIT_TRAIN)?;
    m.write(&out("manifest.json".into()), &timings, EXIT_TRAIN)?;
    for rec in &result.records {
        println!(
            "k={} test SSE={:.4} R2={:.4} max residual={:.4}",
            rec.k, rec.test_sse, rec.test_r2, rec.max_residual
        );
    }
    println!("k*={} verdict={}", result.chosen_k, result.verdict);
    if result.detection.disagreement {
        println!("note: the residual and SSE criteria disagree on whether anything leaks");
    }
    Ok(())
}

pub fn analyze(a: &AnalyzeArgs, f: &FileConfig) -> Result<(), CliError> {
    let err = fail(EXIT_ANALYZE);
    let mut timings = Timings::default();
    let bytes = read_bytes(&a.model, EXIT_ANALYZE)?;
    let model_hash = sha256_hex(&bytes);
    let text = String::from_utf8_lossy(&bytes);
    let (net, _) = network::from_json(&text).map_err(|e| err(format!("{}: {e}", a.model.display())))?;
    let reducer = extract_reducer(&net).map_err(|e| err(e.to_string()))?;
    let dom = SecretDomain::from_schema(&net.schema);
    let cap = match a.cap.or(f.cap) {
        Some(c) => c,
        None => dom
            .size()
            .finite()
            .and_then(|b| u64::try_from(b).ok())
            .unwrap_or(FALLBACK_CAP),
    };
    let budget = a.budget.or(f.budget).unwrap_or(DEFAULT_BUDGET);

    let mut m = RunManifest::new("analyze", None, json!({ "cap": cap, "budget": budget }));
    m.input(&a.model, &bytes);
    m.output(&a.out);
    let hash = m.hash();
    let finish = |mut census: ClassCensus, timings: &Timings| {
        census.model_hash = Some(model_hash.clone());
        census.manifest_hash = Some(hash.clone());
        write_text(&a.out, &census.to_json(), EXIT_ANALYZE)?;
        m.write(&sibling(&a.out, "manifest.json"), timings, EXIT_ANALYZE)?;
        Ok::<_, CliError>(census)
    };
    match timings.time("analyze", || bnb_census(&reducer, &dom, cap, budget)) {
        Ok(census) => {
            let census = finish(census, &timings)?;
            println!(
                "k={} feasible classes={} nodes={} complete -> {}",
                census.k,
                census.feasible_count(),
                census.nodes,
                a.out.display()
            );
            Ok(())
        }
        Err(CounterError::BudgetExhausted { nodes, partial }) => {
            finish(*partial, &timings)?;
            Err(err(format!(
                "node budget exhausted after {nodes} nodes; partial census written to {}",
                a.out.display()
            )))
        }
        Err(e) => Err(err(e.to_string())),
    }
}

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    let err = fail(EXIT_REPORT);
    let mut timings = Timings::default();
    let census_bytes = read_bytes(&a.census, EXIT_REPORT)?;
    let census = ClassCensus::from_json(&String::from_utf8_lossy(&census_bytes))
        .map_err(|e| err(format!("{}: {e}", a.census.display())))?;
    let mut m = RunManifest::new("report", None, Value::Null);
    m.input(&a.census, &census_bytes);
    let sweep = match &a.sweep {
        Some(p) => {
            let b = read_bytes(p, EXIT_REPORT)?;
            m.input(p, &b);
            Some(SweepResult::from_json(&String::from_utf8_lossy(&b)).map_err(|e| err(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    m.output(&a.out);
    let hash = m.hash();
    let summary = sweep.as_ref().map(SweepResult::summary);
    let mut report = timings
        .time("report", || build_report(&census, summary.as_ref(), None))
        .map_err(|e| err(e.to_string()))?;
    report.provenance.manifest_hash = Some(hash);
    write_text(&a.out, &report.to_json(), EXIT_REPORT)?;
    m.write(&sibling(&a.out, "manifest.json"), &timings, EXIT_REPORT)?;
    println!("{}", report.summary());
    Ok(())
}
