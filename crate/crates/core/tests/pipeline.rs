use facehmax::experiments::{
    read_report_csv, read_trials_csv, run_cfe, run_fie_behavioral, run_fie_neural, run_wpe, write_report_csv,
    write_trials_csv, C2Store, ExperimentConfig, ExperimentReport, Setup, TestFace, UPRIGHT_MINUS_INVERTED,
};
use facehmax::hmax::{c2, read_bank, read_c2_cache, write_bank, write_c2_cache, Band, Model, ModelConfig};
use facehmax::stimulus::{gen_synthetic_faces, split_train_test, StimulusParams};
use facehmax::{SizeClass, TemplateBank};

struct Small {
    model: Model,
    stim: StimulusParams,
    cfg: ExperimentConfig,
    banks: Vec<TemplateBank>,
    test: Vec<TestFace>,
}

fn small() -> Small {
    let stim = StimulusParams::default();
    let faces: Vec<TestFace> = gen_synthetic_faces(16, 4, (308, 300))
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, f)| TestFace::prepare(&format!("f{i}"), &f.image, Some(f.eye_region), &stim).unwrap())
        .collect();
    let (train, test) = split_train_test(&faces).unwrap();
    let model = Model::new(ModelConfig::default()).unwrap();
    let images: Vec<_> = train.iter().map(|f| f.image.clone()).collect();
    let banks = SizeClass::ALL
        .iter()
        .map(|&s| facehmax::hmax::learn_templates(&model, &images, 30, s, Band(7), 9).unwrap())
        .collect();
    let cfg = ExperimentConfig {
        cfe_faces: 4,
        wpe_faces: 3,
        fie_faces: 8,
        cfe_bootstrap_runs: 100,
        wpe_bootstrap_runs: 100,
        fie_bootstrap_runs: 100,
        coverage_subset_large: 10,
        coverage_subset_medium: 15,
        neural_band: (0.0, 1.0),
        seed: 21,
        ..Default::default()
    };
    Small { model, stim, cfg, banks, test }
}

fn run_all(w: &Small, store: &mut C2Store) -> Vec<ExperimentReport> {
    let s = Setup { model: &w.model, banks: &w.banks, stimulus: &w.stim, config: &w.cfg };
    vec![
        run_cfe(&s, &w.test, store).unwrap(),
        run_fie_behavioral(&s, &w.test, store).unwrap(),
        run_fie_neural(&s, &w.test, store).unwrap(),
        run_wpe(&s, &w.test, store).unwrap(),
    ]
}

fn json(reports: &[ExperimentReport]) -> String {
    serde_json::to_string(reports).unwrap()
}

#[test]
fn experiments_are_reproducible_and_cache_independent() {
    let w = small();
    let mut store = C2Store::new();
    let first = json(&run_all(&w, &mut store));
    // second pass reads every C2 from the warm store
    let warm = json(&run_all(&w, &mut store));
    let cold = json(&run_all(&w, &mut C2Store::new()));
    assert_eq!(first, warm);
    assert_eq!(first, cold);

    let dir = tempfile::tempdir().unwrap();
    let reports = run_all(&w, &mut store);
    let refs: Vec<&ExperimentReport> = reports.iter().collect();
    write_report_csv(&dir.path().join("report.csv"), &refs).unwrap();
    write_trials_csv(&dir.path().join("trials.csv"), &refs).unwrap();
    let rows: Vec<_> = reports.iter().flat_map(|r| r.rows.clone()).collect();
    let trials: Vec<_> = reports.iter().flat_map(|r| r.trials.clone()).collect();
    assert_eq!(read_report_csv(&dir.path().join("report.csv")).unwrap(), rows);
    assert_eq!(read_trials_csv(&dir.path().join("trials.csv")).unwrap(), trials);
    for r in &reports {
        assert_eq!(r.trials.len(), r.declared_trials, "{}", r.experiment);
    }
}

#[test]
fn stored_banks_and_caches_reproduce_c2() {
    let w = small();
    let dir = tempfile::tempdir().unwrap();
    let pooling = w.model.config().pooling;
    let c1 = w.model.c1_for_c2(&w.test[0].image).unwrap();
    for bank in &w.banks {
        let path = dir.path().join(format!("{}.bank", bank.size_class()));
        write_bank(&path, bank).unwrap();
        let back = read_bank(&path).unwrap();
        assert_eq!(back.hash(), bank.hash());
        assert_eq!(back.templates(), bank.templates());
        let v = c2(&c1, bank, pooling).unwrap();
        assert_eq!(c2(&c1, &back, pooling).unwrap(), v);
    }
    let mut store = C2Store::new();
    let banks: Vec<&TemplateBank> = w.banks.iter().collect();
    let images: Vec<_> = w.test.iter().map(|f| f.image.clone()).collect();
    let fresh = store.extract(&w.model, &banks, &images).unwrap();
    let mut reloaded = Vec::new();
    for (i, cache) in store.caches().enumerate() {
        let path = dir.path().join(format!("{i}.c2"));
        write_c2_cache(&path, cache).unwrap();
        reloaded.push(read_c2_cache(&path).unwrap());
    }
    let mut warm = C2Store::from_caches(reloaded);
    assert_eq!(warm.extract(&w.model, &banks, &images).unwrap(), fresh);
}

#[test]
fn neural_effect_is_the_mean_of_partition_effects() {
    let w = small();
    let cfg = ExperimentConfig { sizes: vec![SizeClass::Large], ..w.cfg.clone() };
    let effect = |bank: TemplateBank| {
        let banks = [bank];
        let s = Setup { model: &w.model, banks: &banks, stimulus: &w.stim, config: &cfg };
        let r = run_fie_neural(&s, &w.test, &mut C2Store::new()).unwrap();
        r.row("large", UPRIGHT_MINUS_INVERTED, "effect").unwrap().mean
    };
    let large = w.banks.iter().find(|b| b.size_class() == SizeClass::Large).unwrap();
    let full = effect(large.clone());
    let parts: Vec<f64> = (0..3)
        .map(|p| effect(large.subset(&(p * 10..p * 10 + 10).collect::<Vec<_>>()).unwrap()))
        .collect();
    let mean = parts.iter().sum::<f64>() / 3.0;
    assert!((full - mean).abs() < 1e-12, "{full} vs {mean}");
}
