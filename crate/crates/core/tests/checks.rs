use fogsched::experiments::checks::SUITES;
use fogsched::experiments::{run_checks, CheckOptions};

#[test]
fn full_report_passes_and_lists_every_suite() {
    let r = run_checks(&CheckOptions::default());
    let names: Vec<&str> = r.suites.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, SUITES);
    for s in &r.suites {
        assert!(s.passed(), "{s:?}");
    }
    let text = r.to_json_lines().unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), SUITES.len() + 1);
    assert_eq!(lines[0]["name"], "gradient");
    assert!(lines[0]["cases"].as_u64().unwrap() >= 300);
    assert_eq!(lines.last().unwrap()["summary"]["passed"], true);
}

#[test]
fn another_seed_also_passes() {
    let r = run_checks(&CheckOptions { seed: 77, ..CheckOptions::default() });
    assert!(r.passed(), "{}", r.to_json_lines().unwrap());
}
