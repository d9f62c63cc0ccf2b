use dnest::inner::ProtocolVariant;
use dnest::models::{default_c0, eps_max, ModelKind};
use dnest::protocol::{self, OuterConfig, Overrides};
use dnest::regimes::{RegimeCase, RegimeParams};
use dnest::{CoeffVec, Params};

fn truth(model: ModelKind, k: usize, r: f64) -> dnest::Sieve {
    let c0 = default_c0(model);
    let eps = eps_max(model, k, c0, r).unwrap();
    protocol::truth_for(model, k, c0, eps, r, 1, 0).unwrap()
}

#[test]
fn smallest_instance_spends_four_bits() {
    let p: Params = RegimeParams::new(1, 1, 4, 0.75).unwrap();
    for model in ModelKind::ALL {
        let res = protocol::run_protocol(&p, model, &truth(model, 4, 0.75), &Overrides::default(), 5).unwrap();
        assert_eq!(res.transcript_bits, Some(4));
        assert!(res.l2_error.is_finite() && res.l2_error >= 0.0);
    }
}

#[test]
fn every_model_runs_under_every_inner_layer() {
    let p = RegimeParams::new(128, 8, 12, 0.8).unwrap();
    for model in ModelKind::ALL {
        let f = truth(model, 8, 0.8);
        for inner in [ProtocolVariant::RandomPartition, ProtocolVariant::Idealized] {
            let ov = Overrides { inner: Some(inner), h: Some(2), ..Overrides::default() };
            let res = protocol::run_protocol(&p, model, &f, &ov, 9).unwrap();
            let coeffs: &CoeffVec = &res.coeffs;
            assert_eq!(coeffs.k(), 4);
            assert_eq!(res.samples, 128 * 8);
            match inner {
                ProtocolVariant::Idealized => assert!(res.transcript.is_none()),
                _ => assert_eq!(res.transcript_bits, Some(128 * 12)),
            }
        }
    }
}

#[test]
fn idealized_layer_beats_budgeted_layer() {
    let p = RegimeParams::new(256, 16, 6, 0.8).unwrap();
    let f = truth(ModelKind::Density, 16, 0.8);
    let run = |inner| {
        let ov = Overrides { inner: Some(inner), ..Overrides::default() };
        protocol::mse_trials(&p, ModelKind::Density, &f, &ov, 40, 3).unwrap().mean
    };
    assert!(run(ProtocolVariant::Idealized) < run(ProtocolVariant::RandomPartition));
}

#[test]
fn plan_drives_inner_choice() {
    let dense = RegimeParams::new(1 << 16, 1, 4, 0.8).unwrap();
    let cfg = OuterConfig::prepare(&dense, ModelKind::Density, &Overrides::default()).unwrap();
    assert_eq!(cfg.plan.case_id, RegimeCase::Case1);
    assert_eq!(cfg.inner, ProtocolVariant::RandomPartition);
    assert_eq!(cfg.alphabet(), 16 * cfg.plan.k);
}

#[test]
fn worst_case_over_truths() {
    let p = RegimeParams::new(64, 16, 8, 0.8).unwrap();
    let model = ModelKind::BinaryRegression;
    let c0 = default_c0(model);
    let eps = eps_max(model, 8, c0, 0.8).unwrap();
    let w = protocol::worst_of_g(&p, model, 8, c0, eps, &Overrides::default(), 10, 3, 2).unwrap();
    assert_eq!(w.per_truth.len(), 3);
    assert_eq!(w.worst, w.per_truth[w.worst_index]);
    assert!(w.per_truth.iter().all(|&v| v <= w.worst));
}
