use occupancy_web::Session;

fn session() -> Session {
    Session::new(4, 10, 0.4, 3).unwrap()
}

#[test]
fn heatmap_covers_grid_with_rates_in_unit_interval() {
    let s = session();
    let map = s.heatmap(30);
    let rates = map["rates"].as_array().unwrap();
    assert_eq!(rates.len(), 900);
    assert!(rates.iter().all(|r| (0.0..=1.0).contains(&r.as_f64().unwrap())));
    let stations = map["stations"].as_array().unwrap();
    assert!(stations.iter().any(|s| !s["measured"].is_null()));
    assert!(stations.iter().all(|s| s["kriged"].is_number()));
}

#[test]
fn variogram_curve_starts_at_zero_and_reaches_sill() {
    let v = session().variogram(40);
    let curve = v["curve"].as_array().unwrap();
    assert_eq!(curve.len(), 40);
    assert_eq!(curve[0][1].as_f64().unwrap(), 0.0);
    let total = v["nugget"].as_f64().unwrap() + v["sill"].as_f64().unwrap();
    let last = curve[39][1].as_f64().unwrap();
    assert!(last <= total + 1e-12);
}

#[test]
fn course_profile_totals_dominate_ticketing() {
    let s = session();
    assert_eq!(s.n_courses(), 4 * 10 * 3);
    for i in [0, 7, s.n_courses() - 1] {
        let p = s.course_profile(i).unwrap();
        let t = p["ticketing"].as_array().unwrap();
        let total = p["total"].as_array().unwrap();
        assert_eq!(t.len(), p["truth"].as_array().unwrap().len());
        for (a, b) in t.iter().zip(total) {
            assert!(b.as_f64().unwrap() >= a.as_f64().unwrap());
        }
    }
    assert!(s.course_profile(s.n_courses()).is_none());
}

#[test]
fn network_without_counts_is_rejected() {
    let err = Session::new(3, 10, 0.0, 1).err().unwrap();
    assert!(err.contains("counting-cell"), "{err}");
}
