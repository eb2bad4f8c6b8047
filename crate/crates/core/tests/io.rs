use std::fs;

use axislab_core::geometry::EmbeddingMatrix;
use axislab_core::io::report::{RocSeries, ScatterSeries};
use axislab_core::io::{
    config_hash, emit_report, import_npy, load_embeddings, load_head, load_manifest,
    save_embeddings, save_head, save_manifest, to_canonical_string, Report,
};
use axislab_core::predictor::{JacobianBundle, LinearHead};
use axislab_core::synth::{generate, mlp_head, planted_bias_spec};
use axislab_core::{Error, HeadModel};
use ndarray::{array, Array1, Array2};
use serde_json::{json, Value};

fn sample_emb() -> EmbeddingMatrix<f64> {
    let data = Array2::from_shape_fn((3, 4), |(i, j)| (i as f64) - 0.25 * j as f64);
    EmbeddingMatrix::new("cell-a", "toy", 6, data).unwrap()
}

#[test]
fn emb1_file_round_trip_keeps_header_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.emb");
    let emb = sample_emb();
    save_embeddings(&emb, &path).unwrap();
    let back: EmbeddingMatrix<f64> = load_embeddings(&path).unwrap();
    assert_eq!(back, emb);
    let bytes = fs::read(&path).unwrap();
    let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
    let header: Value = serde_json::from_slice(&bytes[..nl]).unwrap();
    assert_eq!(header["format"], "EMB1");
    assert_eq!(header["dtype"], "f32le");
    assert_eq!(header["n"], 3);
    assert_eq!(header["h"], 4);
    assert_eq!(header["layer"], 6);
    assert_eq!(bytes.len() - nl - 1, 3 * 4 * 4);
}

#[test]
fn emb1_rejects_short_long_and_nan_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.emb");
    save_embeddings(&sample_emb(), &path).unwrap();
    let good = fs::read(&path).unwrap();

    fs::write(&path, &good[..good.len() - 3]).unwrap();
    match load_embeddings::<f64>(&path) {
        Err(Error::Truncated {
            expected, actual, ..
        }) => assert_eq!((expected, actual), (48, 45)),
        other => panic!("expected truncation, got {other:?}"),
    }

    let mut long = good.clone();
    long.extend_from_slice(&[0, 0, 0, 0]);
    fs::write(&path, &long).unwrap();
    assert!(matches!(
        load_embeddings::<f64>(&path),
        Err(Error::Format { .. })
    ));

    let mut nan = good.clone();
    let start = nan.len() - 4 * 4; // first value of row 2
    nan[start..start + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&path, &nan).unwrap();
    assert!(matches!(
        load_embeddings::<f64>(&path),
        Err(Error::NonFinite { row: 2, .. })
    ));

    fs::write(&path, b"{\"format\":\"EMB2\"}\n").unwrap();
    assert!(matches!(
        load_embeddings::<f64>(&path),
        Err(Error::Format { .. })
    ));
}

#[test]
fn manifest_round_trip_and_line_numbered_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    let s = generate::<f64>(&planted_bias_spec(1)).unwrap();
    save_manifest(&s.manifest, &path).unwrap();
    let (m, cov) = load_manifest(&path).unwrap();
    assert_eq!(m, s.manifest);
    assert_eq!(cov.len(), 1600);
    assert_eq!(
        m.populations(),
        vec!["HC3-AI", "HC3-human", "NYT-human", "Cp1-AI"]
    );

    fs::write(
        &path,
        "{\"text_id\":\"a\",\"population\":\"P\",\"role\":\"AI\",\"covariates\":{\"len\":3}}\n\
         {\"text_id\":\"b\",\"population\":\"P\",\"role\":\"human\",\"covariates\":{\"len\":null}}\n",
    )
    .unwrap();
    let (m, cov) = load_manifest(&path).unwrap();
    assert_eq!(m.labels(), vec![true, false]);
    assert_eq!(cov.columns["len"], vec![Some(3.0), None]);
    assert!(matches!(
        cov.column("len"),
        Err(Error::MissingCovariate { .. })
    ));

    fs::write(
        &path,
        "{\"text_id\":\"a\",\"population\":\"P\",\"role\":\"AI\"}\n\n{\"text_id\":\"a\",\"population\":\"Q\",\"role\":\"AI\"}\n",
    )
    .unwrap();
    assert!(matches!(
        load_manifest(&path),
        Err(Error::DuplicateTextId { line: 3, .. })
    ));

    fs::write(
        &path,
        "{\"text_id\":\"a\",\"population\":\"P\",\"role\":\"robot\"}\n",
    )
    .unwrap();
    assert!(matches!(
        load_manifest(&path),
        Err(Error::UnknownRole { line: 1, .. })
    ));
}

#[test]
fn head_files_round_trip_every_kind() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("head.json");
    let heads: Vec<HeadModel<f64>> = vec![
        HeadModel::Linear(LinearHead {
            weights: array![0.5, -1.0, 2.0],
            bias: 0.1,
        }),
        HeadModel::JacobianBundle(JacobianBundle {
            rows: array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.5]],
            baseline_logits: array![0.2, -0.3],
        }),
        HeadModel::Mlp(mlp_head(3, 4, 1.0, 9).unwrap()),
    ];
    for h in heads {
        save_head(&h, &path).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["kind"], h.kind());
        let back: HeadModel<f64> = load_head(&path).unwrap();
        assert_eq!(back, h);
    }

    fs::write(&path, r#"{"kind":"linear","w_h":[1.0,2.0],"bias":0.5}"#).unwrap();
    let h: HeadModel<f64> = load_head(&path).unwrap();
    assert_eq!(h.logit(array![1.0, 1.0].view()).unwrap(), 3.5);

    fs::write(
        &path,
        r#"{"kind":"jacobian_bundle","rows":[[1.0,2.0],[3.0]],"baseline_logits":[0,0]}"#,
    )
    .unwrap();
    assert!(load_head::<f64>(&path).is_err());
    fs::write(&path, r#"{"kind":"conv","w":[]}"#).unwrap();
    assert!(load_head::<f64>(&path).is_err());
}

#[test]
fn npy_import_matches_the_values_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.npy");
    let mut header = "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }".to_string();
    while (10 + header.len() + 1) % 64 != 0 {
        header.push(' ');
    }
    header.push('\n');
    let mut bytes = b"\x93NUMPY\x01\x00".to_vec();
    bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
    bytes.extend_from_slice(header.as_bytes());
    for v in [1.5f64, -2.0, 0.25, 4.0, 5.0, -6.5] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&path, &bytes).unwrap();
    let emb: EmbeddingMatrix<f64> = import_npy(&path, "c", "arch", 3).unwrap();
    assert_eq!(emb.data(), array![[1.5, -2.0, 0.25], [4.0, 5.0, -6.5]]);
    assert_eq!(emb.layer, 3);
}

#[test]
fn canonical_json_ignores_key_order_and_hashes_stably() {
    let a = json!({"b": 1, "a": [0.1, 2.5e-12, null], "c": {"y": true, "x": "s"}});
    let b = json!({"c": {"x": "s", "y": true}, "a": [0.1, 2.5e-12, null], "b": 1});
    let sa = to_canonical_string(&a).unwrap();
    assert_eq!(sa, to_canonical_string(&b).unwrap());
    assert_eq!(
        sa,
        "{\"a\":[1.0000000000000001e-1,2.4999999999999998e-12,null],\"b\":1,\"c\":{\"x\":\"s\",\"y\":true}}"
    );
    assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    assert_eq!(config_hash(&a).unwrap().len(), 64);
    let back: Value = serde_json::from_str(&sa).unwrap();
    assert_eq!(back["a"][1].as_f64().unwrap(), 2.5e-12);
}

#[test]
fn report_directory_has_json_tables_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = Report::new(json!({"subcommand": "test", "seed": 3})).unwrap();
    let pos: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
    let neg: Vec<f64> = (0..50).map(|i| i as f64 / 12.0 - 1.0).collect();
    r.metric_blocks.insert(
        "b".into(),
        axislab_core::MetricBlock::from_scores(&pos, &neg, 1.0).unwrap(),
    );
    r.roc.push(RocSeries {
        name: "proj class".into(),
        pos: pos.clone(),
        neg,
    });
    r.scatter.push(ScatterSeries {
        name: "typ".into(),
        predicted: pos.clone(),
        measured: pos,
    });
    let written = emit_report(&r, dir.path()).unwrap();
    let names: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert!(names.contains(&"report.json".to_string()));
    assert!(names.contains(&"metric_blocks.csv".to_string()));
    assert_eq!(names.iter().filter(|n| n.ends_with(".svg")).count(), 2);
    let roc = fs::read_to_string(
        written
            .iter()
            .find(|p| p.to_string_lossy().contains("roc_"))
            .unwrap(),
    )
    .unwrap();
    assert_eq!(roc.matches("class=\"operating-point\"").count(), 2);

    let json = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let again = tempfile::tempdir().unwrap();
    emit_report(&r, again.path()).unwrap();
    assert_eq!(
        json,
        fs::read_to_string(again.path().join("report.json")).unwrap()
    );
    let v: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(
        v["config_hash"],
        config_hash(&json!({"seed": 3, "subcommand": "test"})).unwrap()
    );
    assert!(v["ledger"]["update_rule"].as_str().unwrap().contains("eps"));
}

#[test]
fn exported_linear_bundle_predicts_what_it_measures() {
    // An extractor bundle for a linear head: per-text Jacobian rows equal w_h.
    let s = generate::<f64>(&planted_bias_spec(4)).unwrap();
    let emb = s.stacked().unwrap();
    let HeadModel::Linear(lin) = &s.head else {
        panic!("planted head is linear")
    };
    let rows = Array2::from_shape_fn((emb.n(), emb.h()), |(_, j)| lin.weights[j]);
    let baseline: Array1<f64> = (0..emb.n())
        .map(|i| emb.row(i).dot(&lin.weights) + lin.bias)
        .collect();
    let bundle = HeadModel::JacobianBundle(JacobianBundle {
        rows,
        baseline_logits: baseline,
    });
    let d = &s.axis_bank().unwrap()[1];
    let from_bundle =
        axislab_core::predictor::prediction_record(&emb, d, &bundle, 0.5, None).unwrap();
    let from_linear =
        axislab_core::predictor::prediction_record(&emb, d, &s.head, 0.5, None).unwrap();
    let measured = from_linear.measured.unwrap();
    for (p, m) in from_bundle.predicted.iter().zip(&measured) {
        assert!((p - m).abs() < 1e-6);
    }
}
