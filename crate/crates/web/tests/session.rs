use dynmpi::EstimatorMethod;
use dynmpi_web::Session;

#[test]
fn session_runs_every_operation() {
    let s = Session::new(15, 5, 10.0, 1).unwrap();
    assert_eq!(s.reference_frame(), 2);
    assert_eq!(s.truth(0).unwrap().len(), 225);
    assert!(s.truth(5).is_none());

    let path = s.ffp_path(200);
    assert_eq!(path.len(), 400);
    let [x0, x1, y0, y1] = s.grid().bounds();
    let margin = 0.5 * s.grid().pixel_width();
    assert!(path.chunks(2).all(|p| p[0] >= x0 - margin && p[0] <= x1 + margin && p[1] >= y0 - margin && p[1] <= y1 + margin));

    let levels = s.levels(EstimatorMethod::Norm, 1).unwrap();
    assert_eq!(levels.len(), 5);
    assert_eq!(levels[0], 0.0);
    assert_eq!(s.levels(EstimatorMethod::Interp, 4).unwrap().len(), 20);

    let k = s.kaczmarz(8.5).unwrap();
    let r = s.resesop(EstimatorMethod::Norm, 1.0, 1).unwrap();
    for o in [&k, &r] {
        assert_eq!(o.image.len(), 225);
        assert!(o.image.iter().all(|&v| v >= 0.0));
        assert!(o.mse.is_finite() && !o.trace.is_empty());
        assert_eq!(*o.trace.last().unwrap(), o.mse);
    }
    assert_eq!(s.resesop(EstimatorMethod::Norm, 1.0, 1).unwrap(), r);
}

#[test]
fn invalid_requests_are_errors() {
    assert!(Session::new(15, 0, 10.0, 1).is_err());
    let s = Session::new(15, 3, 0.0, 1).unwrap();
    assert!(s.kaczmarz(-1.0).is_err());
    assert!(s.resesop(EstimatorMethod::Interp, 1.0, 1).is_err());
    assert!(s.levels(EstimatorMethod::Norm, 3).is_err());
}
