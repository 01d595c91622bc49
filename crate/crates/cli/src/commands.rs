use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use facehmax::experiments::{
    run_cfe, run_fie_behavioral, run_fie_neural, run_wpe, write_json, write_report_csv, write_trials_csv, C2Store,
    ExperimentConfig, ExperimentReport, Setup, TestFace,
};
use facehmax::hmax::sidecar_path;
use facehmax::hmax::{
    c2_from_distance, c2_min_distances, calibrate_sigma, face_oval_extent, learn_templates, read_bank, read_c2_cache,
    write_bank, write_c2_cache, BankHeader,
};
use facehmax::stimulus::io::{load_images, read_image, write_pgm};
use facehmax::stimulus::{
    apply_attention_cfe, gen_synthetic_faces, invert, make_composite, make_whole_part, split_train_test, Image,
};
use facehmax::{Band, Model, Region, SizeClass, TemplateBank};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{plot, Cli, Command, Experiment, UsageError};

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow!(UsageError(e.to_string()))
}

pub fn dispatch(cli: Cli) -> Result<ExitCode> {
    let g = cli.global;
    let mut cfg = RunConfig::load(g.config.as_deref()).map_err(|e| usage(format!("{e:#}")))?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = g.out {
        cfg.paths.out = out;
    }
    cfg.experiment.seed = cfg.seed;
    if let Command::Run { sizes: Some(sizes), .. } = &cli.command {
        cfg.experiment.sizes = parse_sizes(&sizes.join(","))?;
    }
    if let Command::GenFaces { count: Some(n) } = &cli.command {
        cfg.faces.count = *n as usize;
    }
    cfg.validate().map_err(usage)?;
    let ctx = Ctx { cfg, strict: g.strict, emit_plot: g.emit_plot };
    let run = move || match cli.command {
        Command::GenFaces { .. } => ctx.gen_faces(),
        Command::Prep => ctx.prep(),
        Command::Learn { size, n, band } => ctx.learn(&size, n, band),
        Command::Extract => ctx.extract(),
        Command::Run { experiment, .. } => ctx.run(experiment),
        Command::Verify => ctx.verify(),
        Command::CalibrateSigma { size, target } => ctx.calibrate_sigma(&size, target),
    };
    match g.threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(t) => facehmax::par::with_threads(t, run),
        None => run(),
    }
}

fn parse_sizes(s: &str) -> Result<Vec<SizeClass>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(SizeClass::ALL.to_vec());
    }
    let sizes = s
        .split(',')
        .map(|p| p.parse::<SizeClass>())
        .collect::<facehmax::Result<Vec<_>>>()
        .map_err(usage)?;
    if sizes.is_empty() {
        return Err(usage("no size classes given"));
    }
    Ok(sizes)
}

/// `manifest.json` next to generated faces.
#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    seed: u64,
    canvas: (usize, usize),
    faces: Vec<ManifestFace>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFace {
    id: String,
    file: String,
    seed: u64,
    eye_region: Region,
    content_hash: String,
}

/// `report.json`: every report of one `run` plus what produced it.
#[derive(Debug, Serialize, Deserialize)]
struct RunReport {
    tool_version: String,
    seed: u64,
    experiment_config: ExperimentConfig,
    reports: Vec<ExperimentReport>,
}

struct Ctx {
    cfg: RunConfig,
    strict: bool,
    emit_plot: bool,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create directory {}", dir.display()))
}

impl Ctx {
    fn model(&self) -> Result<Model> {
        Ok(Model::new(self.cfg.model.clone())?)
    }

    fn gen_faces(&self) -> Result<ExitCode> {
        let dir = self.cfg.faces_dir();
        create_dir(&dir)?;
        let (count, canvas) = (self.cfg.faces.count, self.cfg.faces.canvas);
        let faces = gen_synthetic_faces(count, self.cfg.seed, canvas).map_err(usage)?;
        let digits = count.to_string().len().max(3);
        let mut entries = Vec::with_capacity(count);
        for f in &faces {
            let id = format!("face{:0digits$}", f.index + 1);
            let file = format!("{id}.pgm");
            let path = dir.join(&file);
            write_pgm(&path, &f.image).with_context(|| format!("writing {}", path.display()))?;
            let content_hash = read_image(&path)?.content_hash();
            entries.push(ManifestFace { id, file, seed: f.seed, eye_region: f.eye_region, content_hash });
        }
        let manifest = Manifest { seed: self.cfg.seed, canvas, faces: entries };
        write_json(&dir.join("manifest.json"), &manifest)?;
        println!("wrote {count} faces and manifest.json to {}", dir.display());
        Ok(ExitCode::SUCCESS)
    }

    /// Loads and preprocesses the faces, split into (train, test).
    fn faces(&self) -> Result<(Vec<TestFace>, Vec<TestFace>)> {
        let dir = self.cfg.faces_dir();
        if !dir.is_dir() {
            return Err(usage(format!("face directory {} not found (run gen-faces or set paths.faces)", dir.display())));
        }
        let images = load_images(&dir)?;
        let manifest: Option<Manifest> = match fs::read_to_string(dir.join("manifest.json")) {
            Ok(text) => Some(serde_json::from_str(&text).context("parsing manifest.json")?),
            Err(_) => None,
        };
        let region_of = |name: &str| {
            manifest
                .as_ref()
                .and_then(|m| m.faces.iter().find(|f| f.id == name).map(|f| f.eye_region))
                .or(self.cfg.faces.eye_region)
        };
        let prepared = facehmax::par::try_map(&images, |n| {
            TestFace::prepare(&n.name, &n.image, region_of(&n.name), &self.cfg.stimulus)
        })?;
        split_train_test(&prepared).map_err(usage)
    }

    fn check_geometry(&self, model: &Model, face: &Image) -> Result<()> {
        let band = model.config().template_band;
        let c1 = model.c1_bands(face, &[band])?;
        let oval = self.cfg.stimulus.oval_for(face.height(), face.width());
        let (w, h) = face_oval_extent(&c1, &oval, band)?;
        if w.abs_diff(17) <= 1 && h.abs_diff(22) <= 1 {
            return Ok(());
        }
        let msg = format!("face oval spans {w}x{h} C1 units at band {band}, expected 17x22 +/- 1");
        if self.strict {
            bail!("calibration check failed: {msg}");
        }
        eprintln!("warning: {msg}");
        Ok(())
    }

    fn prep(&self) -> Result<ExitCode> {
        let (train, test) = self.faces()?;
        let model = self.model()?;
        self.check_geometry(&model, &train[0].image)?;
        let root = self.cfg.paths.out.join("prep");
        for (name, set) in [("train", &train), ("test", &test)] {
            let dir = root.join(name);
            create_dir(&dir)?;
            for f in set.iter() {
                write_pgm(&dir.join(format!("{}.pgm", f.id)), &f.image)?;
            }
        }
        // one example of each derived stimulus
        let stim = &self.cfg.stimulus;
        let bg = stim.background();
        let dir = root.join("examples");
        create_dir(&dir)?;
        if test.len() >= 2 {
            let (a, b) = (&test[0], &test[1]);
            let m = stim.misalign_for(a.image.height(), a.image.width());
            for (name, aligned) in [("composite_aligned", true), ("composite_misaligned", false)] {
                let comp = make_composite(&a.image, &b.image, aligned, stim.gap_px, m, bg)?;
                let attended = apply_attention_cfe(&comp, stim.cfe_attenuation, bg);
                write_pgm(&dir.join(format!("{name}.pgm")), &attended)?;
                write_pgm(&dir.join(format!("{name}_inverted.pgm")), &invert(&attended))?;
            }
            if let Some(region) = a.eye_region {
                let (whole, part) = make_whole_part(&b.image, &a.image, &region, stim.feather_px, bg)?;
                write_pgm(&dir.join("whole.pgm"), &whole)?;
                write_pgm(&dir.join("part.pgm"), &part)?;
            }
        }
        println!("wrote {} train and {} test faces to {}", train.len(), test.len(), root.display());
        Ok(ExitCode::SUCCESS)
    }

    fn learn(&self, size: &str, n: Option<usize>, band: Option<usize>) -> Result<ExitCode> {
        let sizes = parse_sizes(size)?;
        let mut model_cfg = self.cfg.model.clone();
        if let Some(b) = band {
            model_cfg.template_band = Band(b);
        }
        let n = n.unwrap_or(self.cfg.learn.n_templates);
        if n == 0 {
            return Err(usage("--n must be at least 1"));
        }
        model_cfg.validate().map_err(usage)?;
        let model = Model::new(model_cfg)?;
        let (train, _) = self.faces()?;
        self.check_geometry(&model, &train[0].image)?;
        let images: Vec<Image> = train.into_iter().map(|f| f.image).collect();
        let dir = self.cfg.banks_dir();
        create_dir(&dir)?;
        for s in sizes {
            let bank = learn_templates(&model, &images, n, s, model.config().template_band, self.cfg.seed)?;
            let path = dir.join(format!("{s}.bank"));
            write_bank(&path, &bank)?;
            println!("{s}: {} templates (k={}) at band {} -> {}", bank.len(), bank.k(), bank.band(), path.display());
        }
        Ok(ExitCode::SUCCESS)
    }

    fn banks(&self, sizes: &[SizeClass]) -> Result<Vec<TemplateBank>> {
        let dir = self.cfg.banks_dir();
        let missing: Vec<String> = sizes
            .iter()
            .map(|s| dir.join(format!("{s}.bank")))
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            bail!("missing template bank(s): {} (run learn first)", missing.join(", "));
        }
        let banks = sizes
            .iter()
            .map(|s| read_bank(&dir.join(format!("{s}.bank"))))
            .collect::<facehmax::Result<Vec<_>>>()?;
        for b in &banks {
            if b.sigma() != self.cfg.model.sigma {
                let msg = format!("{} bank has sigma {} but the config says {}", b.size_class(), b.sigma(), self.cfg.model.sigma);
                if self.strict {
                    bail!("{msg}");
                }
                eprintln!("warning: {msg}; the bank's value is used");
            }
        }
        Ok(banks)
    }

    fn cache_path(&self, bank: &TemplateBank) -> PathBuf {
        self.cfg.c2_dir().join(format!("{}.c2", bank.size_class()))
    }

    fn load_store(&self, banks: &[TemplateBank]) -> Result<C2Store> {
        let mut caches = Vec::new();
        for b in banks {
            let path = self.cache_path(b);
            if path.is_file() {
                let cache = read_c2_cache(&path)?;
                if cache.bank_hash == b.hash() {
                    caches.push(cache);
                }
            }
        }
        Ok(C2Store::from_caches(caches))
    }

    fn save_store(&self, banks: &[TemplateBank], store: &C2Store) -> Result<()> {
        create_dir(&self.cfg.c2_dir())?;
        for b in banks {
            if let Some(cache) = store.cache(b.hash()) {
                write_c2_cache(&self.cache_path(b), cache)?;
            }
        }
        Ok(())
    }

    fn extract(&self) -> Result<ExitCode> {
        let banks = self.banks(&self.cfg.experiment.sizes)?;
        let (_, test) = self.faces()?;
        let model = self.model()?;
        let mut images: Vec<Image> = test.iter().map(|f| f.image.clone()).collect();
        images.extend(test.iter().map(|f| invert(&f.image)));
        let mut store = self.load_store(&banks)?;
        let refs: Vec<&TemplateBank> = banks.iter().collect();
        store.extract(&model, &refs, &images)?;
        self.save_store(&banks, &store)?;
        println!("C2 of {} test images against {} bank(s) cached in {}", images.len(), banks.len(), self.cfg.c2_dir().display());
        Ok(ExitCode::SUCCESS)
    }

    fn run(&self, which: Experiment) -> Result<ExitCode> {
        let exp = &self.cfg.experiment;
        let banks = self.banks(&exp.sizes)?;
        let (_, test) = self.faces()?;
        let model = self.model()?;
        let setup = Setup { model: &model, banks: &banks, stimulus: &self.cfg.stimulus, config: exp };
        let mut store = self.load_store(&banks)?;
        let take = |n: usize, what: &str| -> Result<&[TestFace]> {
            test.get(..n)
                .ok_or_else(|| anyhow!("{what} needs {n} test faces, only {} available", test.len()))
        };
        let all = which == Experiment::All;
        let mut reports = Vec::new();
        if all || which == Experiment::Cfe {
            reports.push(run_cfe(&setup, take(exp.cfe_faces, "cfe")?, &mut store)?);
        }
        if all || which == Experiment::Fie {
            reports.push(run_fie_behavioral(&setup, take(exp.fie_faces, "fie")?, &mut store)?);
        }
        if all || which == Experiment::FieNeural {
            reports.push(run_fie_neural(&setup, take(exp.fie_faces, "fie-neural")?, &mut store)?);
        }
        if all || which == Experiment::Wpe {
            reports.push(run_wpe(&setup, take(exp.wpe_faces, "wpe")?, &mut store)?);
        }
        self.save_store(&banks, &store)?;

        let dir = self.cfg.reports_dir();
        create_dir(&dir)?;
        let refs: Vec<&ExperimentReport> = reports.iter().collect();
        write_report_csv(&dir.join("report.csv"), &refs)?;
        write_trials_csv(&dir.join("trials.csv"), &refs)?;
        if self.emit_plot {
            for r in &reports {
                fs::write(dir.join(format!("{}.svg", r.experiment)), plot::effect_chart(r))?;
            }
        }
        print_summary(&reports, exp);
        let run = RunReport {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.cfg.seed,
            experiment_config: exp.clone(),
            reports,
        };
        write_json(&dir.join("report.json"), &run)?;
        println!("reports written to {}", dir.display());
        Ok(ExitCode::SUCCESS)
    }

    fn verify(&self) -> Result<ExitCode> {
        let mut checks: Vec<(String, std::result::Result<(), String>)> = Vec::new();

        let faces = self.cfg.faces_dir();
        if let Ok(text) = fs::read_to_string(faces.join("manifest.json")) {
            let manifest: Manifest = serde_json::from_str(&text).context("parsing manifest.json")?;
            let bad: Vec<String> = manifest
                .faces
                .iter()
                .filter(|f| read_image(&faces.join(&f.file)).map(|i| i.content_hash() != f.content_hash).unwrap_or(true))
                .map(|f| f.file.clone())
                .collect();
            let res = if bad.is_empty() { Ok(()) } else { Err(format!("changed or unreadable: {}", bad.join(", "))) };
            checks.push((format!("manifest ({} faces)", manifest.faces.len()), res));
        }

        let mut banks = Vec::new();
        let bank_dir = self.cfg.banks_dir();
        let mut bank_files: Vec<PathBuf> = fs::read_dir(&bank_dir)
            .map(|d| d.filter_map(|e| e.ok().map(|e| e.path())).collect())
            .unwrap_or_default();
        bank_files.retain(|p| p.extension().is_some_and(|e| e == "bank"));
        bank_files.sort();
        for path in bank_files {
            let name = format!("bank {}", path.display());
            match read_bank(&path) {
                Ok(bank) => {
                    checks.push((name, verify_bank(&path, &bank, &self.cfg)));
                    banks.push(bank);
                }
                Err(e) => checks.push((name, Err(e.to_string()))),
            }
        }

        let mut cache_files: Vec<PathBuf> = fs::read_dir(self.cfg.c2_dir())
            .map(|d| d.filter_map(|e| e.ok().map(|e| e.path())).collect())
            .unwrap_or_default();
        cache_files.retain(|p| p.extension().is_some_and(|e| e == "c2"));
        cache_files.sort();
        for path in cache_files {
            let res = match read_c2_cache(&path) {
                Ok(c) if banks.iter().any(|b| b.hash() == c.bank_hash) => Ok(()),
                Ok(c) => Err(format!("no bank with hash {}", c.bank_hash)),
                Err(e) => Err(e.to_string()),
            };
            checks.push((format!("c2 cache {}", path.display()), res));
        }

        let report_path = self.cfg.reports_dir().join("report.json");
        if let Ok(text) = fs::read_to_string(&report_path) {
            let run: RunReport = serde_json::from_str(&text).context("parsing report.json")?;
            let model = self.model()?;
            for r in &run.reports {
                let used: Option<Vec<TemplateBank>> = r
                    .bank_hashes
                    .iter()
                    .map(|(_, h)| banks.iter().find(|b| b.hash() == h).cloned())
                    .collect();
                let res = match used {
                    None => Err("a bank it used is missing or changed".to_string()),
                    Some(used) => {
                        let setup = Setup {
                            model: &model,
                            banks: &used,
                            stimulus: &self.cfg.stimulus,
                            config: &run.experiment_config,
                        };
                        if setup.config_hash() != r.config_hash {
                            Err("config hash differs from the current config".to_string())
                        } else if r.seed != run.seed {
                            Err(format!("seed {} differs from run seed {}", r.seed, run.seed))
                        } else {
                            Ok(())
                        }
                    }
                };
                checks.push((format!("report {}", r.experiment), res));
            }
        }

        if checks.is_empty() {
            bail!("nothing to verify under {}", self.cfg.paths.out.display());
        }
        let mut failed = 0;
        for (name, res) in &checks {
            match res {
                Ok(()) => println!("ok    {name}"),
                Err(e) => {
                    failed += 1;
                    println!("FAIL  {name}: {e}");
                }
            }
        }
        if failed > 0 {
            bail!("{failed} of {} checks failed", checks.len());
        }
        Ok(ExitCode::SUCCESS)
    }

    fn calibrate_sigma(&self, size: &str, target: Option<f64>) -> Result<ExitCode> {
        let size: SizeClass = size.parse().map_err(usage)?;
        let (lo, hi) = self.cfg.experiment.neural_band;
        let target = target.unwrap_or(0.5 * (lo + hi));
        let bank = self.banks(&[size])?.remove(0);
        let (_, test) = self.faces()?;
        let n = self.cfg.experiment.fie_faces.min(test.len());
        let model = self.model()?;
        let pooling = model.config().pooling;
        let per_face = facehmax::par::try_map(&test[..n], |f| c2_min_distances(&model.c1_for_c2(&f.image)?, &bank, pooling))?;
        let dists: Vec<f64> = per_face.into_iter().flatten().collect();
        let sigma = calibrate_sigma(&dists, target).map_err(usage)?;
        let mean_at = |s: f64| dists.iter().map(|&d| f64::from(c2_from_distance(d, s))).sum::<f64>() / dists.len() as f64;
        println!("{size} bank, {n} upright test faces: mean C2 {:.4} at sigma {}", mean_at(bank.sigma()), bank.sigma());
        println!("sigma {sigma:.6} gives mean C2 {target}");
        write_json(
            &self.cfg.paths.out.join("sigma.json"),
            &serde_json::json!({ "size": size, "target": target, "sigma": sigma, "faces": n, "bank_hash": bank.hash() }),
        )?;
        Ok(ExitCode::SUCCESS)
    }
}

fn verify_bank(path: &Path, bank: &TemplateBank, cfg: &RunConfig) -> std::result::Result<(), String> {
    let text = fs::read_to_string(sidecar_path(path)).map_err(|e| format!("sidecar: {e}"))?;
    let side: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("sidecar: {e}"))?;
    let header: BankHeader =
        serde_json::from_value(side["header"].clone()).map_err(|e| format!("sidecar header: {e}"))?;
    if header != BankHeader::of(bank) {
        return Err("sidecar does not match the bank file".into());
    }
    let mut model = cfg.model.clone();
    model.template_band = bank.band();
    model.sigma = bank.sigma();
    if model.hash() != bank.config_hash() {
        return Err("bank was learnt under a different model config".into());
    }
    Ok(())
}

fn print_summary(reports: &[ExperimentReport], exp: &ExperimentConfig) {
    for r in reports {
        println!("\n== {} (seed {}) ==", r.experiment, r.seed);
        println!("{:<14} {:<17} {:<26} {:>10} {:>9} {:>10} {:>6}", "size", "orientation", "condition", "mean", "sem", "p", "n");
        let line = |row: &facehmax::experiments::ReportRow| {
            let p = match row.p {
                Some(p) if row.p_floored => format!("<={p:.1e}"),
                Some(p) => format!("{p:.4}"),
                None => String::new(),
            };
            println!(
                "{:<14} {:<17} {:<26} {:>10.4} {:>9.4} {:>10} {:>6}",
                row.size, row.orientation, row.condition, row.mean, row.sem, p, row.n
            );
        };
        let (coverage, main): (Vec<_>, Vec<_>) = r.rows.iter().partition(|row| row.condition.starts_with("coverage_"));
        main.into_iter().for_each(line);
        if !coverage.is_empty() {
            println!(
                "-- coverage control (templates per bootstrap run: large {}, medium {}, small all) --",
                exp.coverage_subset_large, exp.coverage_subset_medium
            );
            coverage.into_iter().for_each(line);
        }
    }
    println!();
}
