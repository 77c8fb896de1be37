use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::Serialize;
use stig_core::generation::TokenLedger;

use crate::svg;

#[derive(Parser, Serialize)]
pub struct Args {
    /// Root of generation runs: <runs>/<method>/<paper_id>/ledger.json.
    #[arg(long)]
    pub runs: PathBuf,
    /// Output directory for ledger.tsv and ledger_chart.svg.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct MethodTotals {
    pub runs: usize,
    pub calls: usize,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    pub effective_tokens: u64,
}

impl MethodTotals {
    fn absorb(&mut self, ledger: &TokenLedger) {
        self.runs += 1;
        self.calls += ledger.calls.len();
        self.prompt_tokens += ledger.calls.iter().map(|c| c.prompt_tokens).sum::<u64>();
        self.completion_tokens += ledger.calls.iter().map(|c| c.completion_tokens).sum::<u64>();
        self.total_tokens += ledger.total_tokens();
        self.effective_tokens += ledger.effective_tokens;
    }

    fn ratio(&self) -> Option<f64> {
        (self.total_tokens > 0).then(|| self.effective_tokens as f64 / self.total_tokens as f64)
    }
}

pub fn run(args: Args) -> Result<()> {
    super::write_config_snapshot(&args.out, &args)?;

    let mut totals: BTreeMap<String, MethodTotals> = BTreeMap::new();
    let mut methods: Vec<PathBuf> = fs::read_dir(&args.runs)
        .with_context(|| format!("reading runs directory {}", args.runs.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    methods.sort();
    for method_dir in methods {
        let method = method_dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let mut run_dirs: Vec<PathBuf> = fs::read_dir(&method_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("ledger.json").is_file())
            .collect();
        run_dirs.sort();
        for run_dir in run_dirs {
            let path = run_dir.join("ledger.json");
            let data = fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let ledger: TokenLedger = serde_json::from_str(&data)
                .with_context(|| format!("parsing {}", path.display()))?;
            totals.entry(method.clone()).or_default().absorb(&ledger);
        }
    }

    if totals.is_empty() {
        bail!("no ledgers found under {}", args.runs.display());
    }

    let mut table = String::from(
        "method\truns\tcalls\tprompt_tokens\tcompletion_tokens\ttotal_tokens\teffective_tokens\teffectiveness_ratio\n",
    );
    for (method, t) in &totals {
        let ratio = t
            .ratio()
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "-".into());
        table.push_str(&format!(
            "{method}\t{}\t{}\t{}\t{}\t{}\t{}\t{ratio}\n",
            t.runs, t.calls, t.prompt_tokens, t.completion_tokens, t.total_tokens, t.effective_tokens
        ));
    }
    let table_path = args.out.join("ledger.tsv");
    fs::write(&table_path, &table)
        .with_context(|| format!("writing {}", table_path.display()))?;

    let chart = svg::grouped_bar_chart(
        "Token consumption by method",
        &totals
            .iter()
            .map(|(method, t)| (method.as_str(), t.total_tokens, t.effective_tokens))
            .collect::<Vec<_>>(),
    );
    let chart_path = args.out.join("ledger_chart.svg");
    fs::write(&chart_path, chart)
        .with_context(|| format!("writing {}", chart_path.display()))?;

    print!("{table}");
    println!("-> {} and {}", table_path.display(), chart_path.display());
    Ok(())
}
