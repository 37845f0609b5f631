use pathinv_py::{builtin, density, reconstruct_config, sample};

#[test]
fn densities_normalize() {
    let v = builtin("fermi_well", 30, 0.0, 29.0).unwrap();
    for b in ["classical", "semiclassical", "exact"] {
        let d = density(b, v.clone(), 0.0, 29.0, 30, 0.1, 6.0).unwrap();
        let z: f64 = d.iter().sum::<f64>() - 0.5 * (d[0] + d[29]);
        assert!((z - 1.0).abs() < 1e-9, "{b}");
    }
    assert!(density("quantum", v, 0.0, 29.0, 30, 0.1, 6.0).is_err());
}

#[test]
fn sampling_and_reconstruct() {
    let v = builtin("cosine_well", 30, 0.0, 29.0).unwrap();
    let a = sample(v.clone(), 0.0, 29.0, 1.0, 10.0, 15, 42).unwrap();
    assert_eq!(a, sample(v, 0.0, 29.0, 1.0, 10.0, 15, 42).unwrap());
    assert!(builtin("nope", 30, 0.0, 29.0).is_err());

    let dir = tempfile::tempdir().unwrap();
    let cfg = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/double_well.toml");
    let m: serde_json::Value =
        serde_json::from_str(&reconstruct_config(&cfg, dir.path(), Some(7), Some("exact")).unwrap()).unwrap();
    assert_eq!(m["summary"]["converged"], true);
    assert!(reconstruct_config(&cfg, dir.path(), None, Some("quantum")).is_err());
}
