//! Acceptance suite.
//!
//! Every criterion runs inside one harness and prints a single line:
//! `PASS [n] name: detail` or `FAIL [n] name: reason`. The test fails if
//! any criterion fails. The lines go straight to stderr, so they show up
//! without `--nocapture`.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use num_rational::Ratio;
use proptest::prop_assert_eq;
use proptest::strategy::Strategy as _;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stratlab::algorithm::{
    fit, load_algorithm, predict, registered_algorithm_kinds, rl_train, transform, Algorithm, AlgorithmManifest,
    EpsilonGreedyBandit, KArmedBandit, LinearRegression, StandardScaler,
};
use stratlab::backtest::{
    attribute_vertical, run_backtest, run_report, simple_return, BacktestRequest, BacktestResult, Frequency, Grouping,
};
use stratlab::data::{open_source, register_fixture, AssetMetadata, DataSourceConfig, SourceData};
use stratlab::pipeline::{
    build_inference_pipeline, build_train_pipeline, run_dag, run_dag_with, validate_dag, DagError, PipelineDag,
    RunError, RunOptions, TaskContext, TaskError, TaskRegistry, TaskSpec, TaskStatus, TrainWindow,
};
use stratlab::registry::{
    keys, load_manifest, load_outcome, load_strategy, save_backtest_report, save_spec, save_strategy, FsStore,
    MemoryStore, ObjectKey, ObjectStore, RegistryError, StoreError,
};
use stratlab::strategy::{
    new_strategy, registered_strategy_kinds, Outcome, OutcomeContent, Strategy, StrategyError, StrategyInterface,
    StrategyMeta, StrategySpec, StrategyType,
};
use stratlab::timeseries::{TimeSeriesDataset, TradingDate};
use stratlab::{RunId, StrategyId};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    }};
}

fn d(s: &str) -> TradingDate {
    s.parse().unwrap()
}

fn f1_meta() -> StrategyMeta {
    StrategyMeta::new(&["AAA", "BBB"], "BMK", StrategyType::Allocation)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Bypasses the test harness's output capture.
fn report(line: String) {
    use std::io::Write;
    let _ = writeln!(std::io::stderr().lock(), "{line}");
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("fixture end-to-end", c1_fixture_end_to_end),
        ("save/load round trip", c2_round_trip),
        ("attribution identity", c3_attribution_identity),
        ("interface purity", c4_interface_purity),
        ("dag fuzz", c5_dag_fuzz),
        ("no look-ahead", c6_no_look_ahead),
        ("split/slice/align algebra", c7_split_slice_align),
        ("interface call order", c8_call_order),
        ("store integrity", c9_store_integrity),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => report(format!("PASS [{n}] {name}: {detail}")),
            Err(reason) => {
                report(format!("FAIL [{n}] {name}: {reason}"));
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// ---------------------------------------------------------------------------
// 1. Train -> save -> infer -> backtest on F1.

const F1_DATES: [&str; 5] = ["2022-01-03", "2022-01-04", "2022-01-05", "2022-01-06", "2022-01-07"];

/// F1 closes as exact rationals, in `F1_DATES` order.
fn f1_exact() -> BTreeMap<&'static str, Vec<Ratio<i64>>> {
    let r = |n: i64, den: i64| Ratio::new(n, den);
    BTreeMap::from([
        ("AAA", vec![r(100, 1), r(110, 1), r(121, 1), r(121, 1), r(1331, 10)]),
        ("BBB", vec![r(100, 1), r(100, 1), r(90, 1), r(99, 1), r(99, 1)]),
        ("BMK", vec![r(100, 1), r(105, 1), r(105, 1), r(11025, 100), r(11025, 100)]),
    ])
}

fn c1_fixture_end_to_end() -> Check {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().map_err(err)?;
    let store = FsStore::open(dir.path()).map_err(err)?;
    let data = DataSourceConfig::f1();

    let train = build_train_pipeline(&StrategySpec::equal_weight(f1_meta()), TrainWindow::default()).map_err(err)?;
    let report = run_dag(&train, &store, &data).map_err(err)?;
    ensure!(report.succeeded(), "train run failed: {report:?}");
    let raw = store.get(&keys::trained_strategy_id(&report.run_id)).map_err(err)?;
    let id = StrategyId::parse(std::str::from_utf8(&raw).map_err(err)?).map_err(err)?;

    let infer = build_inference_pipeline(&id, d("2022-01-07"));
    let report = run_dag(&infer, &store, &data).map_err(err)?;
    ensure!(report.succeeded(), "inference run failed: {report:?}");
    let outcome = load_outcome(&store, &id, d("2022-01-07")).map_err(err)?;
    let OutcomeContent::Portfolio(p) = &outcome.content else {
        return Err(format!("expected a portfolio outcome, got {:?}", outcome.content));
    };
    ensure!(p.weight("AAA") == 0.5 && p.weight("BBB") == 0.5, "stored weights {:?}", p.weights());

    let mut strategy = load_strategy(&store, &id).map_err(err)?;
    let request = BacktestRequest {
        start: d("2022-01-03"),
        end: d("2022-01-07"),
        frequency: Frequency::Monthly,
        grouping: Grouping::Asset,
    };
    let report = run_report(&mut strategy, &data, &request).map_err(err)?;
    save_backtest_report(&store, &id, &RunId::random(), &report.to_json()).map_err(err)?;

    // Hand-chained F1 arithmetic.
    let expected = [0.05, 0.0, 0.05, 0.05];
    let got: Vec<f64> = report.period_returns.iter().map(|p| p.value).collect();
    ensure!(got.len() == 4, "expected 4 periods, got {got:?}");
    for (g, e) in got.iter().zip(expected) {
        ensure!((g - e).abs() <= 1e-15, "f64 period returns {got:?} vs {expected:?}");
    }
    let cumulative = report.metrics.cumulative_return;
    ensure!((cumulative - 0.157625).abs() <= 1e-9, "cumulative return {cumulative}");

    // Exact replay in rationals with the engine's schedule and weights.
    let dates: Vec<TradingDate> = F1_DATES.iter().map(|s| d(s)).collect();
    let schedule: Vec<TradingDate> =
        std::iter::once(report.period_returns[0].start).chain(report.period_returns.iter().map(|p| p.end)).collect();
    ensure!(schedule == dates, "rebalance schedule {schedule:?}");
    let exact = f1_exact();
    let pos = |date: TradingDate| dates.iter().position(|x| *x == date).unwrap();
    let mut holdings = Vec::new();
    let mut asset_returns = Vec::new();
    let mut bench = Vec::new();
    for w in schedule.windows(2) {
        let out = strategy.execute(w[0]).map_err(err)?;
        let OutcomeContent::Portfolio(p) = out.content else { return Err("non-portfolio outcome".into()) };
        ensure!(p.weights().values().all(|v| *v == 0.5), "weights on {}: {:?}", w[0], p.weights());
        holdings.push(p.weights().keys().map(|a| (a.clone(), Ratio::new(1, 2))).collect::<BTreeMap<_, _>>());
        let (a, b) = (pos(w[0]), pos(w[1]));
        asset_returns.push(
            ["AAA", "BBB"]
                .iter()
                .map(|s| (s.to_string(), simple_return(exact[s][a], exact[s][b])))
                .collect::<BTreeMap<_, _>>(),
        );
        bench.push(simple_return(exact["BMK"][a], exact["BMK"][b]));
    }
    let exact_result =
        BacktestResult::from_periods(None, schedule, holdings, asset_returns, bench.clone()).map_err(err)?;
    let twentieth = Ratio::new(1, 20);
    let want = vec![twentieth, Ratio::from_integer(0), twentieth, twentieth];
    ensure!(exact_result.period_returns == want, "exact period returns {:?}", exact_result.period_returns);
    ensure!(
        exact_result.cumulative_return() == Ratio::new(1261, 8000),
        "exact cumulative {}",
        exact_result.cumulative_return()
    );
    ensure!(bench == vec![twentieth, Ratio::from_integer(0), twentieth, Ratio::from_integer(0)], "benchmark {bench:?}");

    let elapsed = t0.elapsed();
    ensure!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    Ok(format!("cumulative {cumulative} (exact 1261/8000), periods {got:?}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------
// 2. load(save(x)) reproduces outputs for every registered kind.

/// Random-walk closes for `n_assets` assets plus a benchmark on consecutive
/// weekdays, with a few holes.
fn random_source(rng: &mut ChaCha8Rng, n_assets: usize, n_days: usize) -> (SourceData, StrategyMeta) {
    let assets: Vec<String> = (0..n_assets).map(|i| format!("A{i}")).collect();
    let mut rows = Vec::new();
    let mut date = d("2021-03-01");
    let mut level: Vec<f64> = (0..=n_assets).map(|_| rng.gen_range(20.0..200.0)).collect();
    for _ in 0..n_days {
        while date.naive().format("%u").to_string().parse::<u32>().unwrap() > 5 {
            date = date.add_days(1);
        }
        for (i, px) in level.iter_mut().enumerate() {
            *px *= 1.0 + rng.gen_range(-0.04..0.04);
            let name = if i == n_assets { "BMK".to_string() } else { assets[i].clone() };
            if i == n_assets || rng.gen_bool(0.95) {
                rows.push((date, name, (*px * 100.0).round() / 100.0));
            }
        }
        date = date.add_days(1);
    }
    let sectors = ["Tech", "Energy", "Health"];
    let metadata = assets
        .iter()
        .enumerate()
        .map(|(i, a)| AssetMetadata {
            asset_id: a.clone(),
            name: format!("Asset {i}"),
            sector: sectors[i % 3].into(),
            category: "Equity".into(),
            country: if i % 2 == 0 { "US".into() } else { "KR".into() },
        })
        .collect();
    let universe: Vec<&str> = assets.iter().map(String::as_str).collect();
    (SourceData::new(rows, metadata).unwrap(), StrategyMeta::new(&universe, "BMK", StrategyType::Allocation))
}

fn reference_spec(kind: &str, meta: StrategyMeta, lookback: u32) -> Result<StrategySpec, String> {
    let with_type = |t| StrategyMeta { strategy_type: t, ..meta.clone() };
    Ok(match kind {
        "equal_weight" => StrategySpec::equal_weight(meta),
        "momentum_topk" => StrategySpec::momentum_topk(meta, lookback, 2),
        "rank_by_momentum" => StrategySpec::rank_by_momentum(with_type(StrategyType::Selection), lookback),
        "regression_signal" => StrategySpec::regression_signal(with_type(StrategyType::Hedge), lookback),
        other => return Err(format!("no fixture recipe for strategy kind `{other}`")),
    })
}

fn numbered_dataset(rng: &mut ChaCha8Rng, rows: usize, columns: &[&str]) -> TimeSeriesDataset {
    let index = (0..rows).map(|i| d("2021-01-01").add_days(i as i64)).collect();
    let values = (0..rows).map(|_| columns.iter().map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    TimeSeriesDataset::new(index, columns.iter().map(|s| s.to_string()).collect(), values).unwrap()
}

fn reload(a: &dyn Algorithm) -> Result<(AlgorithmManifest, Box<dyn Algorithm>), String> {
    let saved = a.save().map_err(err)?;
    let parsed = AlgorithmManifest::from_json(&saved.to_json()).map_err(err)?;
    let loaded = load_algorithm(&parsed).map_err(err)?;
    Ok((saved, loaded))
}

fn algorithm_round_trip(kind: &str, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let (saved, loaded, original): (AlgorithmManifest, Box<dyn Algorithm>, Box<dyn Algorithm>) = match kind {
        "linear_regression" => {
            let rows = rng.gen_range(6..30);
            let train = numbered_dataset(rng, rows, &["f0", "f1", "y"]);
            let fitted = fit(&LinearRegression::new(), &train, Some("y")).map_err(err)?;
            let (saved, loaded) = reload(fitted.as_ref())?;
            let probe = numbered_dataset(rng, 8, &["f0", "f1"]);
            let (a, b) =
                (predict(fitted.as_ref(), &probe).map_err(err)?, predict(loaded.as_ref(), &probe).map_err(err)?);
            ensure!(a == b, "linear predictions differ after reload");
            (saved, loaded, fitted)
        }
        "standard_scaler" => {
            let rows = rng.gen_range(2..30);
            let train = numbered_dataset(rng, rows, &["f0", "f1", "f2"]);
            let fitted = fit(&StandardScaler::new(), &train, None).map_err(err)?;
            let (saved, loaded) = reload(fitted.as_ref())?;
            let probe = numbered_dataset(rng, 8, &["f0", "f1", "f2"]);
            let (a, b) =
                (transform(fitted.as_ref(), &probe).map_err(err)?, transform(loaded.as_ref(), &probe).map_err(err)?);
            ensure!(a == b, "scaler outputs differ after reload");
            (saved, loaded, fitted)
        }
        "epsilon_greedy_bandit" => {
            let arms = rng.gen_range(2..6);
            let rewards: Vec<f64> = (0..arms).map(|_| rng.gen_range(0.0..1.0)).collect();
            let agent = EpsilonGreedyBandit::new(arms, 0.2, rng.gen());
            let trained = rl_train(&agent, &mut KArmedBandit::new(rewards), rng.gen_range(10..200)).map_err(err)?;
            let (saved, loaded) = reload(trained.as_ref())?;
            let greedy = |a: &dyn Algorithm| a.as_rl().map(|r| r.greedy_action(&[]));
            ensure!(greedy(trained.as_ref()) == greedy(loaded.as_ref()), "greedy actions differ after reload");
            (saved, loaded, trained)
        }
        other => return Err(format!("no fixture recipe for algorithm kind `{other}`")),
    };
    ensure!(loaded.save().map_err(err)? == saved, "{kind}: save(load(save(x))) != save(x)");
    ensure!(original.kind() == loaded.kind(), "{kind}: kind changed");
    Ok(())
}

fn c2_round_trip() -> Check {
    let strategy_kinds = registered_strategy_kinds();
    let algorithm_kinds = registered_algorithm_kinds();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let store = MemoryStore::new();
    let mut executions = 0usize;
    const FIXTURES: usize = 20;
    for f in 0..FIXTURES {
        let (n_assets, n_days) = (rng.gen_range(2..5), rng.gen_range(15..40));
        let (source, meta) = random_source(&mut rng, n_assets, n_days);
        let fixture = format!("acceptance-round-trip-{f}");
        register_fixture(&fixture, source);
        let config = DataSourceConfig::fixture(&fixture);
        for kind in &strategy_kinds {
            let lookback = rng.gen_range(1..4);
            let mut original = new_strategy(reference_spec(kind, meta.clone(), lookback)?).map_err(err)?;
            original.set_configs(config.clone());
            original.train(TradingDate::MIN, TradingDate::MAX).map_err(|e| format!("{kind} train: {e}"))?;
            let id = save_strategy(&store, &original).map_err(err)?;
            let mut loaded = load_strategy(&store, &id).map_err(err)?;
            loaded.set_configs(config.clone());

            let valid = original.reset(TradingDate::MIN, TradingDate::MAX).map_err(err)?;
            ensure!(
                loaded.reset(TradingDate::MIN, TradingDate::MAX).map_err(err)? == valid,
                "{kind}: valid dates differ"
            );
            ensure!(!valid.is_empty(), "{kind} on fixture {f}: no valid dates");
            for date in valid {
                let (a, b) = (original.execute(date), loaded.execute(date));
                match (a, b) {
                    (Ok(a), Ok(b)) => ensure!(
                        a.content == b.content && a.as_of == b.as_of && a.horizon_days == b.horizon_days,
                        "{kind} on fixture {f}, {date}: {a:?} vs {b:?}"
                    ),
                    (a, b) => return Err(format!("{kind} on fixture {f}, {date}: {a:?} vs {b:?}")),
                }
                executions += 1;
            }
        }
        for kind in &algorithm_kinds {
            algorithm_round_trip(kind, &mut rng)?;
        }
    }
    Ok(format!(
        "{} strategy kinds, {} algorithm kinds, {FIXTURES} fixtures, {executions} executions identical",
        strategy_kinds.len(),
        algorithm_kinds.len()
    ))
}

// ---------------------------------------------------------------------------
// 3. Linked contributions add up to the cumulative return.

fn c3_attribution_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    const CASES: usize = 1000;
    let (mut worst_period, mut worst_total) = (0.0f64, 0.0f64);
    for case in 0..CASES {
        let n_assets = rng.gen_range(1..=10);
        let n_periods = rng.gen_range(1..=20);
        let assets: Vec<String> = (0..n_assets).map(|i| format!("X{i}")).collect();
        let dates: Vec<TradingDate> = (0..=n_periods).map(|k| d("2020-01-01").add_days(k as i64 * 7)).collect();
        let mut holdings = Vec::new();
        let mut returns = Vec::new();
        let mut oracle_period = Vec::new();
        for _ in 0..n_periods {
            let mut held: Vec<&String> = assets.iter().filter(|_| rng.gen_bool(0.7)).collect();
            if held.is_empty() {
                held.push(&assets[rng.gen_range(0..n_assets)]);
            }
            let raw: Vec<f64> = held.iter().map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let w: BTreeMap<String, f64> = held.iter().zip(&raw).map(|(a, r)| ((*a).clone(), r / total)).collect();
            let r: BTreeMap<String, f64> = assets.iter().map(|a| (a.clone(), rng.gen_range(-0.3..0.3))).collect();
            // Value of one unit invested at the period start, divided across holdings.
            let value: f64 = w.iter().map(|(a, wi)| wi * (1.0 + r[a])).sum::<f64>() / w.values().sum::<f64>();
            oracle_period.push(value - 1.0);
            holdings.push(w);
            returns.push(r);
        }
        let bench = vec![0.0; n_periods];
        let result = BacktestResult::from_periods(None, dates, holdings, returns, bench).map_err(err)?;

        for (k, oracle) in oracle_period.iter().enumerate() {
            let summed: f64 = result.contributions(k).values().sum();
            let gap = (summed - oracle).abs().max((result.period_returns[k] - oracle).abs());
            worst_period = worst_period.max(gap);
            ensure!(
                gap <= 1e-12,
                "case {case}, period {k}: contributions {summed}, R_k {}, oracle {oracle}",
                result.period_returns[k]
            );
        }
        let wealth = oracle_period.iter().fold(1.0, |acc, r| acc * (1.0 + r));
        let linked: f64 = result.linked_contributions().values().sum();
        let by_asset = attribute_vertical(&result, Grouping::Asset, &[]).map_err(err)?.total();
        let gap = (linked - (wealth - 1.0)).abs().max((by_asset - (wealth - 1.0)).abs());
        worst_total = worst_total.max(gap);
        ensure!(gap <= 1e-9, "case {case}: linked {linked}, by asset {by_asset}, oracle {}", wealth - 1.0);
    }
    Ok(format!("{CASES} cases, max period gap {worst_period:.1e}, max total gap {worst_total:.1e}"))
}

// ---------------------------------------------------------------------------
// 4. The engine only uses the public strategy interface.

struct RecordingStrategy {
    inner: Strategy,
    calls: RefCell<Vec<&'static str>>,
}

impl RecordingStrategy {
    fn record(&self, call: &'static str) {
        self.calls.borrow_mut().push(call);
    }
}

impl StrategyInterface for RecordingStrategy {
    fn strategy_id(&self) -> Option<&StrategyId> {
        self.record("strategy_id");
        self.inner.strategy_id()
    }
    fn universe(&self) -> &[String] {
        self.record("universe");
        self.inner.universe()
    }
    fn benchmark(&self) -> &str {
        self.record("benchmark");
        self.inner.benchmark()
    }
    fn strategy_type(&self) -> StrategyType {
        self.record("strategy_type");
        self.inner.strategy_type()
    }
    fn horizon_days(&self) -> u32 {
        self.record("horizon_days");
        self.inner.horizon_days()
    }
    fn set_configs(&mut self, config: DataSourceConfig) {
        self.record("set_configs");
        self.inner.set_configs(config)
    }
    fn reset(&mut self, start: TradingDate, end: TradingDate) -> Result<Vec<TradingDate>, StrategyError> {
        self.record("reset");
        self.inner.reset(start, end)
    }
    fn execute(&self, date: TradingDate) -> Result<Outcome, StrategyError> {
        self.record("execute");
        self.inner.execute(date)
    }
}

fn c4_interface_purity() -> Check {
    let getters = ["strategy_id", "universe", "benchmark", "strategy_type", "horizon_days"];
    let mut mock = RecordingStrategy {
        inner: new_strategy(StrategySpec::equal_weight(f1_meta())).map_err(err)?,
        calls: RefCell::new(Vec::new()),
    };
    let result = run_backtest(&mut mock, &DataSourceConfig::f1(), d("2022-01-03"), d("2022-01-07")).map_err(err)?;
    let calls = mock.calls.into_inner();

    let unexpected: Vec<&&str> =
        calls.iter().filter(|c| !getters.contains(c) && !["set_configs", "reset", "execute"].contains(c)).collect();
    ensure!(unexpected.is_empty(), "unexpected calls {unexpected:?}");
    let first = |name: &str| calls.iter().position(|c| *c == name);
    let count = |name: &str| calls.iter().filter(|c| **c == name).count();
    ensure!(count("set_configs") == 1 && count("reset") == 1, "calls {calls:?}");
    ensure!(first("set_configs") < first("reset"), "set_configs must precede reset: {calls:?}");
    ensure!(first("reset") < first("execute"), "reset must precede execute: {calls:?}");
    ensure!(count("execute") == result.n_periods(), "{} executes for {} periods", count("execute"), result.n_periods());
    ensure!((result.cumulative_return() - 0.157625).abs() <= 1e-9, "cumulative {}", result.cumulative_return());

    let mut seen: Vec<&str> = calls.clone();
    seen.sort();
    seen.dedup();
    Ok(format!("{} calls, distinct {{{}}}", calls.len(), seen.join(", ")))
}

// ---------------------------------------------------------------------------
// 5. Random DAGs: topological execution, cycle detection, failure skips.

type Events = Arc<Mutex<Vec<(String, bool)>>>;

/// Task `i` may depend on any `j < i`; the task list is then shuffled.
fn random_dag(rng: &mut ChaCha8Rng, n: usize, op: &str) -> PipelineDag {
    let density = rng.gen_range(0.0..0.3);
    let mut tasks: Vec<TaskSpec> = (0..n)
        .map(|i| {
            let mut t = TaskSpec::new(&format!("t{i}"), op);
            for j in 0..i {
                if rng.gen_bool(density) {
                    t = t.after(&format!("t{j}"));
                }
            }
            t
        })
        .collect();
    tasks.shuffle(rng);
    PipelineDag::new("fuzz", tasks)
}

fn recording_registry(events: &Events, failing: Option<String>) -> TaskRegistry {
    let mut registry = TaskRegistry::empty();
    let events = Arc::clone(events);
    registry.register("record", move |ctx: &mut TaskContext<'_>| -> Result<(), TaskError> {
        events.lock().unwrap().push((ctx.task_id.to_string(), true));
        let outcome = match &failing {
            Some(f) if f == ctx.task_id => Err(TaskError::msg("injected failure")),
            _ => Ok(()),
        };
        events.lock().unwrap().push((ctx.task_id.to_string(), false));
        outcome
    });
    registry
}

fn transitive_dependents(dag: &PipelineDag, root: &str) -> BTreeSet<String> {
    let mut children: HashMap<&str, Vec<&str>> = HashMap::new();
    for t in &dag.tasks {
        for dep in &t.depends_on {
            children.entry(dep.as_str()).or_default().push(&t.task_id);
        }
    }
    let mut out = BTreeSet::new();
    let mut queue = VecDeque::from([root]);
    while let Some(n) = queue.pop_front() {
        for c in children.get(n).into_iter().flatten() {
            if out.insert(c.to_string()) {
                queue.push_back(c);
            }
        }
    }
    out
}

fn c5_dag_fuzz() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    const ACYCLIC: usize = 500;
    const CYCLIC: usize = 100;
    let mut failure_runs = 0;

    for case in 0..ACYCLIC {
        let n = rng.gen_range(1..=50);
        let dag = random_dag(&mut rng, n, "record");
        let options = RunOptions { run_id: None, max_parallel: rng.gen_range(1..=8) };

        let events: Events = Arc::default();
        let report = run_dag_with(
            &dag,
            &MemoryStore::new(),
            &DataSourceConfig::f1(),
            &recording_registry(&events, None),
            &options,
        )
        .map_err(|e| format!("case {case}: {e}"))?;
        ensure!(report.succeeded(), "case {case}: {report:?}");
        let events = events.lock().unwrap().clone();
        ensure!(events.len() == 2 * n, "case {case}: {} events for {n} tasks", events.len());
        let at = |id: &str, start: bool| events.iter().position(|(t, s)| t == id && *s == start).unwrap();
        for t in &dag.tasks {
            for dep in &t.depends_on {
                ensure!(
                    at(dep, false) < at(&t.task_id, true),
                    "case {case}: {} started before {dep} finished",
                    t.task_id
                );
            }
        }

        let victim = dag.tasks[rng.gen_range(0..n)].task_id.clone();
        let events: Events = Arc::default();
        let report = run_dag_with(
            &dag,
            &MemoryStore::new(),
            &DataSourceConfig::f1(),
            &recording_registry(&events, Some(victim.clone())),
            &options,
        )
        .map_err(|e| format!("case {case}: {e}"))?;
        let expected_skips = transitive_dependents(&dag, &victim);
        for t in &report.tasks {
            let want = if t.task_id == victim {
                TaskStatus::Failed
            } else if expected_skips.contains(&t.task_id) {
                TaskStatus::Skipped
            } else {
                TaskStatus::Succeeded
            };
            ensure!(
                t.status == want,
                "case {case}: {} is {:?}, expected {want:?} (failed {victim})",
                t.task_id,
                t.status
            );
        }
        let ran: BTreeSet<String> = events.lock().unwrap().iter().map(|(t, _)| t.clone()).collect();
        ensure!(ran.is_disjoint(&expected_skips), "case {case}: a skipped task ran");
        failure_runs += 1;
    }

    for case in 0..CYCLIC {
        let n = rng.gen_range(1..=50);
        let mut dag = random_dag(&mut rng, n, "record");
        let pos: HashMap<String, usize> = dag.tasks.iter().enumerate().map(|(i, t)| (t.task_id.clone(), i)).collect();
        let mut ring: Vec<usize> = (0..n).collect();
        ring.shuffle(&mut rng);
        ring.truncate(rng.gen_range(1..=n.min(6)));
        let ring: Vec<String> = ring.iter().map(|i| format!("t{i}")).collect();
        for (k, id) in ring.iter().enumerate() {
            let next = ring[(k + 1) % ring.len()].clone();
            let task = &mut dag.tasks[pos[id]];
            if !task.depends_on.contains(&next) {
                task.depends_on.push(next);
            }
        }
        let Err(DagError::Cycle(cycle)) = validate_dag(&dag) else {
            return Err(format!("case {case}: cycle through {ring:?} not reported"));
        };
        for (k, id) in cycle.iter().enumerate() {
            let next = &cycle[(k + 1) % cycle.len()];
            ensure!(dag.task(id).is_some_and(|t| t.depends_on.contains(next)), "case {case}: {cycle:?} is not a cycle");
        }
        let events: Events = Arc::default();
        let run = run_dag_with(
            &dag,
            &MemoryStore::new(),
            &DataSourceConfig::f1(),
            &recording_registry(&events, None),
            &RunOptions::default(),
        );
        ensure!(matches!(run, Err(RunError::Dag(DagError::Cycle(_)))), "case {case}: run returned {run:?}");
        ensure!(events.lock().unwrap().is_empty(), "case {case}: tasks ran despite a cycle");
    }
    Ok(format!("{ACYCLIC} acyclic runs ordered, {CYCLIC} cycles rejected, {failure_runs} failure injections skipped exactly the dependents"))
}

// ---------------------------------------------------------------------------
// 6. Truncating the source after d does not change execute(d).

fn c6_no_look_ahead() -> Check {
    let full = DataSourceConfig::f1();
    let source = open_source(&full).map_err(err)?;
    let mut checked = 0;
    let kinds = registered_strategy_kinds();
    for kind in &kinds {
        let mut trained = new_strategy(reference_spec(kind, f1_meta(), 2)?).map_err(err)?;
        trained.set_configs(full.clone());
        trained.train(TradingDate::MIN, TradingDate::MAX).map_err(|e| format!("{kind} train: {e}"))?;
        let spec = trained.to_spec().map_err(err)?;
        let valid = trained.reset(d("2022-01-01"), d("2022-01-07")).map_err(err)?;
        ensure!(!valid.is_empty(), "{kind}: no valid dates on F1");
        for date in valid {
            let reference = trained.execute(date).map_err(|e| format!("{kind} on {date}: {e}"))?;
            let fixture = format!("acceptance-look-ahead-{kind}-{date}");
            register_fixture(&fixture, source.truncated_after(date));
            let mut cut = new_strategy(spec.clone()).map_err(err)?;
            cut.set_configs(DataSourceConfig::fixture(&fixture));
            cut.reset(d("2022-01-01"), date).map_err(|e| format!("{kind} truncated reset on {date}: {e}"))?;
            let truncated = cut.execute(date).map_err(|e| format!("{kind} truncated on {date}: {e}"))?;
            ensure!(truncated == reference, "{kind} on {date}: {truncated:?} vs {reference:?}");
            checked += 1;
        }
    }
    Ok(format!("{} kinds, {checked} (kind, date) pairs unchanged", kinds.len()))
}

// ---------------------------------------------------------------------------
// 7. Split, slice and align on random datasets.

fn dataset_strategy() -> impl proptest::strategy::Strategy<Value = TimeSeriesDataset> {
    (0usize..=100, 1usize..=4, 0i64..400).prop_flat_map(|(rows, cols, origin)| {
        (
            proptest::collection::vec(1i64..5, rows),
            proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, cols), rows),
        )
            .prop_map(move |(gaps, values)| {
                let mut date = d("2020-01-01").add_days(origin);
                let index = gaps
                    .iter()
                    .map(|g| {
                        date = date.add_days(*g);
                        date
                    })
                    .collect();
                let columns = (0..cols).map(|c| format!("c{c}")).collect();
                TimeSeriesDataset::new(index, columns, values).unwrap()
            })
    })
}

fn runner() -> TestRunner {
    TestRunner::new(Config { cases: 256, failure_persistence: None, ..Config::default() })
}

fn c7_split_slice_align() -> Check {
    let cutoff = -10i64..500;
    runner()
        .run(&(dataset_strategy(), cutoff), |(ds, offset)| {
            let (before, after) = ds.split_by_date(d("2020-01-01").add_days(offset));
            prop_assert_eq!(before.concat_rows(&after).unwrap(), ds.clone());
            if let (Some(first), Some(last)) = (ds.first_date(), ds.last_date()) {
                prop_assert_eq!(ds.slice_range(first, last).unwrap(), ds.clone());
            }
            Ok(())
        })
        .map_err(|e| format!("split/slice: {e}"))?;

    runner()
        .run(&(dataset_strategy(), dataset_strategy()), |(a, b)| {
            let (x, y) = a.align(&b);
            let ia: BTreeSet<TradingDate> = a.index().iter().copied().collect();
            let shared: Vec<TradingDate> = b.index().iter().copied().filter(|t| ia.contains(t)).collect();
            prop_assert_eq!(x.index(), &shared[..]);
            prop_assert_eq!(y.index(), &shared[..]);
            for t in &shared {
                let (ra, rx) = (a.row_position(*t).unwrap(), x.row_position(*t).unwrap());
                prop_assert_eq!(a.row(ra), x.row(rx));
                let (rb, ry) = (b.row_position(*t).unwrap(), y.row_position(*t).unwrap());
                prop_assert_eq!(b.row(rb), y.row(ry));
            }
            Ok(())
        })
        .map_err(|e| format!("align: {e}"))?;
    Ok("256 split/slice cases, 256 align cases".into())
}

// ---------------------------------------------------------------------------
// 8. load -> configs -> reset -> execute, and reset without configs.

fn c8_call_order() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let store = FsStore::open(dir.path()).map_err(err)?;
    let id = save_spec(&store, StrategySpec::equal_weight(f1_meta())).map_err(err)?;

    let mut s = load_strategy(&store, &id).map_err(err)?;
    s.set_configs(DataSourceConfig::f1());
    let end = d("2022-01-07");
    let valid = s.reset(d("2022-01-01"), end).map_err(err)?;
    ensure!(valid.last() == Some(&end), "valid dates {valid:?}");
    let outcome = s.execute(end).map_err(err)?;
    let OutcomeContent::Portfolio(p) = &outcome.content else {
        return Err(format!("expected portfolio, got {:?}", outcome.content));
    };
    let total: f64 = p.weights().values().sum();
    ensure!((total - 1.0).abs() < 1e-12 && outcome.strategy_id.as_ref() == Some(&id), "outcome {outcome:?}");

    let dp_id = save_spec(&store, StrategySpec::momentum_topk(f1_meta(), 2, 1)).map_err(err)?;
    let mut dp = load_strategy(&store, &dp_id).map_err(err)?;
    match dp.reset(d("2022-01-01"), end) {
        Err(e) if e.is_missing_config() => {}
        other => return Err(format!("reset before configs returned {other:?}")),
    }
    Ok(format!("portfolio {:?}; reset before configs -> missing config", p.weights()))
}

// ---------------------------------------------------------------------------
// 9. Filesystem store against an in-memory model, and manifest tampering.

fn random_key(rng: &mut ChaCha8Rng, max_depth: usize) -> ObjectKey {
    const SEGMENTS: [&str; 6] = ["a", "b", "c.json", "x-1", "d_2", "e.f"];
    let depth = rng.gen_range(1..=max_depth);
    let segments: Vec<&str> = (0..depth).map(|_| SEGMENTS[rng.gen_range(0..SEGMENTS.len())]).collect();
    ObjectKey::from_segments(&segments).unwrap()
}

fn error_class(e: &StoreError) -> &'static str {
    match e {
        StoreError::KeyFormat { .. } => "key",
        StoreError::NotFound(_) => "not-found",
        StoreError::Io { .. } => "io",
    }
}

fn c9_store_integrity() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let fs = FsStore::open(dir.path()).map_err(err)?;
    let memory = MemoryStore::new();
    let mut model: BTreeMap<ObjectKey, Vec<u8>> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    const OPS: usize = 10_000;
    let mut counts = [0usize; 4];

    for op in 0..OPS {
        let key = random_key(&mut rng, 3);
        match rng.gen_range(0..100) {
            0..=39 => {
                counts[0] += 1;
                let value: Vec<u8> = (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect();
                let (a, b) = (fs.put(&key, &value), memory.put(&key, &value));
                ensure!(
                    a.as_ref().map_err(error_class) == b.as_ref().map_err(error_class),
                    "op {op}: put {key:?}: fs {a:?}, memory {b:?}"
                );
                if a.is_ok() {
                    model.insert(key, value);
                }
            }
            40..=64 => {
                counts[1] += 1;
                let (a, b) = (fs.get(&key), memory.get(&key));
                ensure!(a.as_ref().map_err(error_class) == b.as_ref().map_err(error_class), "op {op}: get {key:?}");
                match model.get(&key) {
                    Some(v) => ensure!(a.as_ref() == Ok(v), "op {op}: get {key:?} returned {a:?}"),
                    None => ensure!(a.is_err(), "op {op}: get of unwritten {key:?} returned {a:?}"),
                }
            }
            65..=84 => {
                counts[2] += 1;
                let prefix = random_key(&mut rng, 2);
                let listed = fs.list_prefix(&prefix).map_err(|e| format!("op {op}: list {prefix:?}: {e}"))?;
                ensure!(listed == memory.list_prefix(&prefix).map_err(err)?, "op {op}: listings differ for {prefix:?}");
                let expected: Vec<ObjectKey> = model.keys().filter(|k| k.has_prefix(&prefix)).cloned().collect();
                ensure!(listed == expected, "op {op}: list {prefix:?} gave {listed:?}, expected {expected:?}");
            }
            _ => {
                counts[3] += 1;
                let (a, b) = (fs.exists(&key), memory.exists(&key));
                ensure!(a.as_ref().map_err(error_class) == b.as_ref().map_err(error_class), "op {op}: exists {key:?}");
                ensure!(a.as_ref().ok() != Some(&!model.contains_key(&key)), "op {op}: exists {key:?} gave {a:?}");
            }
        }
    }

    let id = save_spec(&fs, StrategySpec::momentum_topk(f1_meta(), 2, 1)).map_err(err)?;
    let key = keys::strategy_manifest(&id);
    let pristine = fs.get(&key).map_err(err)?;
    let mut corruptions = 0;
    for i in 0..pristine.len() {
        for _ in 0..3 {
            let mut bytes = pristine.clone();
            bytes[i] = loop {
                let b: u8 = rng.gen();
                if b != pristine[i] {
                    break b;
                }
            };
            fs.put(&key, &bytes).map_err(err)?;
            match load_manifest(&fs, &id) {
                Err(RegistryError::DigestMismatch { .. }) => corruptions += 1,
                other => return Err(format!("byte {i} -> {:#04x}: load returned {other:?}", bytes[i])),
            }
        }
    }
    fs.put(&key, &pristine).map_err(err)?;
    load_manifest(&fs, &id).map_err(err)?;
    Ok(format!(
        "{OPS} ops (put {}, get {}, list {}, exists {}) agree with the model; {corruptions} single-byte corruptions caught",
        counts[0], counts[1], counts[2], counts[3]
    ))
}
