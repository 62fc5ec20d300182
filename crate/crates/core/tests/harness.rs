use num_traits::{Signed, Zero};
use pettis_core::backend::NormBackend;
use pettis_core::carving::CarvingConfig;
use pettis_core::dyadic::{int, interval_of, pow2, rat, Address, Rational};
use pettis_core::eval::integral;
use pettis_core::stepfun::{combine, make_fn, BasicFunction, Selector};
use pettis_core::verify::{
    blowup_for_function, blowup_witness, quotient_table, verify_lemma, BlowupParams, LemmaParams,
    Mode, Status, LEMMAS,
};
use pettis_core::Error;

fn third() -> Selector {
    Selector::slope(rat(1, 3)).unwrap()
}

#[test]
fn every_lemma_passes_on_defaults() {
    for id in LEMMAS {
        let params = LemmaParams {
            samples: 30,
            ..LemmaParams::default()
        };
        let r = verify_lemma(id, &params).unwrap();
        assert!(r.passed(), "{id}: {:?}", r.counterexamples);
        assert!(r.ms.is_none());
    }
}

#[test]
fn zero_function_is_trivial() {
    let params = LemmaParams {
        function: Some(BasicFunction::zero(6)),
        samples: 40,
        ..LemmaParams::default()
    };
    assert!(verify_lemma("3.1-2", &params).unwrap().passed());
    assert!(verify_lemma("3.1-1", &params).unwrap().passed());
}

#[test]
fn incoherent_params() {
    let params = LemmaParams {
        kmax: Some(4),
        max_depth: Some(6),
        ..LemmaParams::default()
    };
    assert!(matches!(verify_lemma("3.1-3", &params), Err(Error::Params(_))));
    let params = LemmaParams {
        cuts: Some(vec![0, 3, 30, 300]),
        ..LemmaParams::default()
    };
    assert!(matches!(verify_lemma("4.4", &params), Err(Error::Schedule(_))));
}

#[test]
fn timing_is_opt_in() {
    let params = LemmaParams {
        timing: true,
        samples: 2,
        ..LemmaParams::default()
    };
    assert!(verify_lemma("3.1-1", &params).unwrap().ms.is_some());
}

#[test]
fn report_json_shape() {
    let params = LemmaParams {
        samples: 4,
        weights: vec![int(1), rat(1, 2)],
        slopes: vec![rat(1, 3), rat(1, 2)],
        ..LemmaParams::default()
    };
    let r = verify_lemma("3.3", &params).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["lemma"], "3.3");
    assert_eq!(v["status"], "pass");
    assert_eq!(v["steps"][0]["name"], "triangle");
    assert_eq!(v["params"]["weights"][1], "1/2");
    assert!(v["ms"].is_null());
    assert!(v["counterexamples"].as_array().unwrap().is_empty());
}

#[test]
fn params_from_json() {
    let p: LemmaParams = serde_json::from_str(
        r#"{"kmax": 6, "slopes": ["1/3", "1/2"], "backend": {"kind": "lp", "p": 4.0}}"#,
    )
    .unwrap();
    assert_eq!(p.kmax, Some(6));
    assert_eq!(p.slopes, vec![rat(1, 3), rat(1, 2)]);
    assert_eq!(p.samples, 200);
    assert!(!NormBackend::from_config(&p.backend).unwrap().is_exact());
}

#[test]
fn blowup_rejects_zero_function() {
    let r = blowup_witness(
        &[int(1), int(-1)],
        &[rat(1, 3), rat(1, 3)],
        &int(0),
        &int(5),
        Mode::L2,
        &BlowupParams::default(),
    );
    assert!(matches!(r, Err(Error::Degenerate(_))));
}

#[test]
fn blowup_zero_target_uses_first_level() {
    let ws = [int(1), rat(1, 4), rat(-1, 8)];
    let ts = [rat(1, 3), rat(1, 2), rat(2, 3)];
    let params = BlowupParams {
        kmax: 12,
        ..BlowupParams::default()
    };
    let w = blowup_witness(&ws, &ts, &rat(1, 5), &int(0), Mode::L2, &params).unwrap();
    assert_eq!(w.k0, w.l + 1);
    assert_eq!(w.status, Status::Pass);
    assert_eq!(w.samples.len(), 20);
}

#[test]
fn blowup_reports_minimal_kmax() {
    let params = BlowupParams {
        kmax: 20,
        ..BlowupParams::default()
    };
    let err = blowup_witness(&[int(1)], &[rat(1, 3)], &int(0), &int(50), Mode::L2, &params).unwrap_err();
    let Error::Infeasible(msg) = err else { panic!("{err}") };
    assert!(msg.contains("needs kmax >="), "{msg}");
}

#[test]
fn blowup_scale_is_tracked() {
    // 3·f(n) against M = 150 is the same witness as f(n) against 50
    let params = BlowupParams {
        kmax: 40,
        samples: 4,
        ..BlowupParams::default()
    };
    let a = blowup_witness(&[int(3)], &[rat(1, 3)], &rat(1, 3), &int(150), Mode::L2, &params).unwrap();
    let b = blowup_witness(&[int(1)], &[rat(1, 3)], &rat(1, 3), &int(50), Mode::L2, &params).unwrap();
    assert_eq!(a.k0, b.k0);
    assert_eq!(a.status, Status::Pass);
    for (s, t) in a.samples.iter().zip(&b.samples) {
        assert_eq!(s.h, t.h);
        assert_eq!(&s.quot_sq, &(&t.quot_sq * int(9)));
    }
}

#[test]
fn blowup_logs_every_step() {
    let params = BlowupParams {
        kmax: 16,
        samples: 3,
        ..BlowupParams::default()
    };
    let w = blowup_witness(&[int(2), rat(1, 8)], &[rat(1, 3), rat(3, 4)], &rat(1, 7), &int(1), Mode::L2, &params)
        .unwrap();
    let names: Vec<&str> = w.samples[0].steps.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "level",
            "interval-monotone",
            "restriction",
            "exact-norm",
            "almost-disjoint",
            "tail",
            "l1-minus-l2",
            "chain-bound",
            "quotient"
        ]
    );
    assert!(w.samples.iter().all(|s| s.pass && s.h.abs() < w.delta));
}

#[test]
fn blowup_general_mode_l4() {
    let params = BlowupParams {
        kmax: 6,
        backend: NormBackend::lp(4.0, 1e-9, 1).unwrap().config(),
        k_samples: 2000,
        ..BlowupParams::default()
    };
    let w = blowup_witness(
        &[int(1), rat(1, 100)],
        &[rat(1, 3), rat(1, 2)],
        &rat(2, 5),
        &rat(1, 10),
        Mode::General,
        &params,
    )
    .unwrap();
    let e = w.endpoint.as_ref().unwrap();
    assert_eq!(w.status, Status::Pass, "{:?}", e.steps);
    assert_eq!(e.n_k, 3);
    assert!(e.left_quotient.is_some() && e.right_quotient.is_some());
    assert!(e.interval_quotient > 0.1);
}

#[test]
fn blowup_general_mode_infeasible() {
    let params = BlowupParams {
        kmax: 6,
        backend: NormBackend::lp(4.0, 1e-9, 1).unwrap().config(),
        k_samples: 200,
        ..BlowupParams::default()
    };
    let r = blowup_witness(&[int(1)], &[rat(1, 3)], &int(0), &int(50), Mode::General, &params);
    assert!(matches!(r, Err(Error::Infeasible(_))));
}

#[test]
fn blowup_for_function_matches_weights() {
    let ws = [int(1), rat(1, 4)];
    let sels = [third(), Selector::slope(rat(1, 2)).unwrap()];
    let f = combine(&ws, &sels, 20).unwrap();
    let params = BlowupParams {
        samples: 5,
        ..BlowupParams::default()
    };
    let a = blowup_for_function(&f, &rat(1, 3), &int(2), Mode::L2, &params).unwrap();
    let b = blowup_witness(
        &ws,
        &[rat(1, 3), rat(1, 2)],
        &rat(1, 3),
        &int(2),
        Mode::L2,
        &BlowupParams { kmax: 20, ..params },
    )
    .unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let diag = make_fn(Selector::Diagonal, 8).unwrap();
    assert!(blowup_for_function(&diag, &int(0), &int(1), Mode::L2, &BlowupParams::default()).is_err());
}

#[test]
fn quotient_table_grows() {
    let f = make_fn(third(), 20).unwrap();
    let cfg = CarvingConfig::new(20, 1).unwrap();
    let hs: Vec<Rational> = (2..=12).map(|j| pow2(-j)).collect();
    let rows = quotient_table(&f, &int(0), &hs, &cfg).unwrap();
    assert_eq!(rows.len(), 11);
    // h = 2^-j spans exactly I_{0^j}, so each row is the restricted identity
    // plus the contribution of coarser levels, and grows from j = 4 on
    for w in rows[2..].windows(2) {
        assert!(w[1].quot_sq_exact > w[0].quot_sq_exact);
    }
    for r in &rows {
        assert!(r.quot_sq_lo <= r.quot_sq_hi);
        assert!(Rational::from_float(r.quot_sq_lo).unwrap() <= r.quot_sq_exact);
        assert!(Rational::from_float(r.quot_sq_hi).unwrap() >= r.quot_sq_exact);
    }
}

#[test]
fn quotient_row_matches_integral() {
    let f = make_fn(third(), 10).unwrap();
    let cfg = CarvingConfig::new(10, 1).unwrap();
    let tau: Address = "0110".parse().unwrap();
    let iv = interval_of(&tau);
    let h = iv.length();
    let rows = quotient_table(&f, &iv.lo, std::slice::from_ref(&h), &cfg).unwrap();
    let direct = integral(&f, &iv.lo, &iv.hi, &cfg).unwrap().norm_sq() / (&h * &h);
    assert_eq!(rows[0].quot_sq_exact, direct);
}

#[test]
fn quotient_table_both_sides() {
    let f = make_fn(third(), 10).unwrap();
    let cfg = CarvingConfig::new(10, 1).unwrap();
    let h = rat(1, 64);
    let rows = quotient_table(&f, &rat(1, 2), &[h.clone(), -h], &cfg).unwrap();
    assert!(rows.iter().all(|r| r.quot_sq_hi.is_finite() && !r.quot_sq_exact.is_zero()));
    assert!(rows[1].h.is_negative());
    assert!(quotient_table(&f, &rat(1, 2), &[int(1)], &cfg).is_err());
    assert!(quotient_table(&f, &rat(1, 2), &[int(0)], &cfg).is_err());
}

#[test]
fn csv_row_format() {
    let f = make_fn(third(), 6).unwrap();
    let cfg = CarvingConfig::new(6, 1).unwrap();
    let rows = quotient_table(&f, &int(0), &[rat(1, 4)], &cfg).unwrap();
    let line = rows[0].csv();
    let cols: Vec<&str> = line.split(',').collect();
    assert_eq!(cols.len(), 5);
    assert_eq!(cols[0], "0/1");
    assert_eq!(cols[1], "1/4");
    assert!(cols[4].contains('/'));
}
