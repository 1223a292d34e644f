use umi_web::{demo_spec, Demo};

#[test]
fn demo_instance_overlays_planted_roi() {
    let mut d = Demo::new(&demo_spec()).unwrap();
    let o: serde_json::Value = serde_json::from_str(&d.overlay_json(1.0, 1000, 0.005).unwrap()).unwrap();
    let selected = o["selected"].as_array().unwrap();
    assert!(selected.iter().any(|s| s.as_bool() == Some(true)));
    assert!(o["planted_f1"].as_f64().unwrap() > 0.5);
    assert!(o["neg_log_p"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap() >= 0.0));

    let c: serde_json::Value = serde_json::from_str(&d.curves_json().unwrap()).unwrap();
    assert!(c["roc"]["auc"].as_f64().unwrap() > 0.8);
    assert!(c["km_positive"]["steps"].is_array() || c["km_positive"].is_null());
}

#[test]
fn mesh_indices_are_in_range() {
    let d = Demo::new(&demo_spec()).unwrap();
    let mesh: serde_json::Value = serde_json::from_str(&d.mesh_json()).unwrap();
    let nv = mesh["positions"].as_array().unwrap().len() as u64;
    for tri in mesh["triangles"].as_array().unwrap() {
        assert!(tri.as_array().unwrap().iter().all(|i| i.as_u64().unwrap() < nv));
    }
}
