use std::fs;
use std::io::Write;
use std::path::Path;

use clens_core::ingest::{ingest_pairs, IngestOptions};
use clens_core::margin::MarginEngine;
use clens_core::report::{render_confirmation, render_margin_table, render_test_result, TableKind, TableLayout};
use clens_core::stats::{confirm_concepts_with, wilcoxon_signed_rank, ConfirmOptions, StatsError};
use clens_core::{Error as CoreError, MarginRow, Store, Warning};
use clens_service::{margins_from_rows, margins_on_the_fly, router, AppState, ServiceConfig};

use crate::args::{Cli, Command, IngestArgs, MarginsArgs, ServeArgs, StatsArgs, StatsMode, WilcoxonArgs};
use crate::Failure;

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Margins(a) => margins(a),
        Command::Stats(a) => match a.mode {
            Some(StatsMode::Wilcoxon(w)) => wilcoxon(w),
            None => stats(a),
        },
        Command::Serve(a) => serve(a),
    }
}

fn report_warnings(warnings: &[Warning]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load(dir: &Path) -> Result<Store, Failure> {
    let (store, warnings) = Store::load(dir)?;
    report_warnings(&warnings);
    Ok(store)
}

fn ingest(a: IngestArgs) -> Result<(), Failure> {
    let (store, warnings) = Store::from_files(
        &a.activations,
        &a.annotations,
        &a.assignments,
        a.gallery.as_deref(),
        &a.dataset_id,
        IngestOptions {
            allow_negative: a.allow_negative,
        },
    )?;
    report_warnings(&warnings);
    store.persist(&a.out)?;
    let mut manifest = serde_json::to_string_pretty(&store.manifest)?;
    manifest.push('\n');
    emit(&manifest, None)
}

fn margins(a: MarginsArgs) -> Result<(), Failure> {
    let store = load(&a.store)?;
    let mut table = MarginEngine::new(&store.bundle, a.base.into()).table(&store.assignments, &a.thresholds);
    report_warnings(&table.warnings);
    if let Some(min) = a.tla_min {
        table = table.filter_tla_min(min);
    }
    let text = render_margin_table(&table, TableLayout::new(TableKind::GoogleMargins), a.format);
    emit(&text, a.out.as_deref())
}

fn stats(a: StatsArgs) -> Result<(), Failure> {
    let (Some(path_a), Some(path_b)) = (&a.store_a, &a.store_b) else {
        return Err(Failure::Invalid(
            "stats needs --store-a and --store-b, or the `wilcoxon --pairs` subcommand".into(),
        ));
    };
    let store_a = load(path_a)?;
    let store_b = load(path_b)?;
    let opts = ConfirmOptions {
        alpha: a.alpha,
        zero_policy: a.zero_policy.into(),
        ..ConfirmOptions::default()
    };
    let report = confirm_concepts_with(&store_a.bundle, &store_b.bundle, &store_a.assignments, &a.thresholds, &opts)?;
    report_warnings(&report.warnings);
    emit(&render_confirmation(&report, a.format), None)
}

fn wilcoxon(a: WilcoxonArgs) -> Result<(), Failure> {
    let pairs = ingest_pairs(&a.pairs)?;
    let xy: Vec<(f64, f64)> = pairs.iter().map(|p| (p.x, p.y)).collect();
    match wilcoxon_signed_rank(&xy, a.alternative, a.zero_policy.into()) {
        Ok(result) => emit(&render_test_result(&result, a.format), None),
        Err(StatsError::AllZeroDifferences) => Err(Failure::Degenerate(format!(
            "all {} paired differences are zero; the signed-rank statistic is undefined",
            xy.len()
        ))),
        Err(e) => Err(Failure::Invalid(e.to_string())),
    }
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    let holdout = load(&a.store)?;
    let margins = if a.margins == "on-the-fly" {
        let table = margins_on_the_fly(&holdout, &a.thresholds);
        report_warnings(&table.warnings);
        table
    } else {
        let text = fs::read_to_string(&a.margins).map_err(|e| Failure::Invalid(format!("{}: {e}", a.margins)))?;
        let rows: Vec<MarginRow> =
            serde_json::from_str(&text).map_err(|e| CoreError::Json(format!("{}: {e}", a.margins)))?;
        margins_from_rows(&holdout, rows)?
    };
    let reference = a.reference_store.as_deref().map(load).transpose()?;
    let state = AppState::new(holdout, margins, reference.as_ref(), a.alpha)?;
    let config = ServiceConfig {
        static_dir: a.static_dir,
        cors_origins: a.cors_origins,
    };
    let app = router(state, &config)?;

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let addr = format!("{}:{}", a.host, a.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Failure::Invalid(format!("cannot listen on {addr}: {e}")))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        clens_service::serve(listener, app).await?;
        Ok(())
    })
}
