mod common;

use common::scenario;
use hpfnav::sim::reference_path;
use hpfnav::solver::solve;

const FIXTURES: [&str; 6] = [
    "point_to_point_fsr.json",
    "centerline_fsr.json",
    "channel_ddr.json",
    "cluttered_ddr.json",
    "gamma_bands_fsr.json",
    "uniform_strip_ddr.json",
];

#[test]
fn fixtures_solve_and_their_reference_reaches_the_target() {
    for name in FIXTURES {
        let sc = scenario(name);
        assert!(sc.workspace.is_admissible(sc.initial.position()), "{name}: start pose blocked");
        let field = solve(&sc.workspace, &sc.bvp, &sc.solver).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(field.check_max_principle().is_empty(), "{name}");
        assert!(field.residual() <= field.tolerance(), "{name}");
        let reference = reference_path(&field, sc.initial.position(), &sc.sim).unwrap();
        assert!(reference.reached_target, "{name}");
        assert_eq!(*reference.points.last().unwrap(), field.target(), "{name}");
        assert!(reference.points.iter().all(|p| sc.workspace.is_admissible(*p)), "{name}");
    }
}

#[test]
fn fixture_files_reject_unknown_keys() {
    let text = std::fs::read_to_string(common::scenario_path("channel_ddr.json")).unwrap();
    let tampered = text.replacen("\"sim\": {", "\"sim\": {\"dtt\": 1, ", 1);
    assert_ne!(text, tampered);
    assert!(hpfnav::scenario::load_scenario(&tampered).is_err());
}
