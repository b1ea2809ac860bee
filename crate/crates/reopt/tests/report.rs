use reopt::harness::{
    render_report, report_columns, run_grid, synthetic_for, ReportFormat, RowMetrics, RunConfig, RunReport,
};
use reopt_core::instance::DemandDistribution;

fn small_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    cfg.grid.scenarios = vec!["30L".into()];
    cfg.grid.replicas = 8;
    cfg.grid.held_out = 3;
    cfg.grid.distribution = DemandDistribution::Range1To10;
    cfg.solver.budget = 150;
    cfg.solver.k = 1;
    cfg.train.epochs = 5;
    cfg.train.batches_per_epoch = 8;
    cfg
}

#[test]
fn empty_report_is_header_only() {
    let r = RunReport::empty("none", 0);
    let csv = render_report(&r, ReportFormat::Csv, false);
    assert_eq!(csv.lines().count(), 1);
    assert_eq!(csv.trim_end(), report_columns(false).join(","));
    let md = render_report(&r, ReportFormat::Markdown, true);
    assert_eq!(md.lines().count(), 2);
    assert!(md.contains("time_s"));
}

#[test]
fn grid_rows_aggregate_and_stay_out_of_training() {
    let cfg = small_config(9);
    let inst = synthetic_for(&cfg.grid, 14, 3);
    let report = run_grid(&inst, &cfg, None).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.leakage_free());

    let s = &report.scenarios[0];
    assert!(s.error.is_none(), "{:?}", s.error);
    let model = s.model.as_ref().unwrap();
    assert_eq!(model.sources.len(), 5);
    let ok: Vec<&RowMetrics> = report.rows.iter().filter_map(|r| r.metrics.as_ref()).collect();
    assert_eq!(ok.len(), 3);
    assert_eq!(s.aggregate, RowMetrics::mean(ok.iter().copied()));

    let csv = render_report(&report.without_timing(), ReportFormat::Csv, false);
    assert_eq!(csv.lines().count(), 1 + 3 + 1);
    assert!(csv.lines().last().unwrap().contains("mean"));
}

#[test]
fn leaked_rows_are_detected() {
    let cfg = small_config(2);
    let inst = synthetic_for(&cfg.grid, 12, 4);
    let mut report = run_grid(&inst, &cfg, None).unwrap();
    assert!(report.leakage_free());
    let held = report.rows[0].instance.clone();
    report.scenarios[0].model.as_mut().unwrap().sources.push(held);
    assert!(!report.leakage_free());
}
