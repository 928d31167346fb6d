//! TOML scenario files.
//!
//! A file either lists buyers explicitly or asks for a generated population:
//!
//! ```toml
//! horizon = 100
//! variant = "rights"
//!
//! [mechanism]
//! kind = "contested_garment"
//!
//! [[sellers]]
//! resupply = { kind = "constant", value = 1.0 }
//!
//! [[buyers]]
//! claim = 1.0
//! income = { kind = "constant", value = 0.0 }
//! ```

use std::path::{Path, PathBuf};

use buying_rights::analysis::Trader;
use buying_rights::scenarios::{generate_dirichlet_scenario, ClaimScale};
use buying_rights::{
    BuyerSpec, DistributionMechanism, MarketConfig, Quantity, SellerSpec, SupplySchedule, Variant,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::output::Column;

fn default_variant() -> Variant {
    Variant::Rights
}

fn default_storage_cost() -> f64 {
    1.0
}

fn default_tolerance() -> f64 {
    buying_rights::market::CONSERVATION_TOL
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub horizon: usize,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    pub mechanism: DistributionMechanism,
    /// Seed for generated buyers; ignored otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_storage_cost")]
    pub seller_storage_cost: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub greedy_price_markup: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sellers: Vec<SellerEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub buyers: Vec<BuyerEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellerEntry {
    pub resupply: SupplySchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyerEntry {
    pub claim: f64,
    pub income: SupplySchedule,
}

/// Dirichlet-sampled buyers with a single unit-supply seller unless
/// sellers are listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub num_buyers: usize,
    /// Omit for the noiseless means.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<f64>,
    pub claim_scale: ClaimScale,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Subset of CSV columns, in the order written. All columns if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditOptions {
    /// Rounds simulated per trial; the scenario horizon if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitudes: Option<Vec<f64>>,
    /// Coalitions as lists of `s<i>` / `b<i>` names.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coalitions: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_joint_per_round: Option<usize>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub variant: Option<Variant>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        file.check()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Parse(msg) => CliError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }

    pub fn apply(&mut self, overrides: Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = Some(seed);
        }
        if let Some(h) = overrides.horizon {
            self.horizon = h;
        }
        if let Some(v) = overrides.variant {
            self.variant = v;
        }
    }

    /// Structural checks that do not need a built config.
    fn check(&self) -> Result<()> {
        let parse = |msg: String| Err(CliError::Parse(msg));
        match (&self.generator, self.buyers.is_empty()) {
            (Some(_), false) => {
                return parse("give either `buyers` or `generator`, not both".into())
            }
            (None, true) => return parse("no buyers: add `[[buyers]]` or a `[generator]`".into()),
            _ => {}
        }
        if self.generator.is_none() && self.sellers.is_empty() {
            return parse("no sellers: add `[[sellers]]`".into());
        }
        if let Some(audit) = &self.audit {
            for coalition in &audit.coalitions {
                parse_coalition(coalition)?;
            }
        }
        self.config()?;
        if let Some(columns) = self.output.as_ref().and_then(|o| o.columns.as_ref()) {
            let buyers = self.num_buyers();
            for name in columns {
                Column::parse(name, buyers)?;
            }
        }
        Ok(())
    }

    pub fn num_buyers(&self) -> usize {
        match &self.generator {
            Some(g) => g.num_buyers,
            None => self.buyers.len(),
        }
    }

    /// The market described by the file. Invalid values are parse errors.
    pub fn config(&self) -> Result<MarketConfig> {
        let invalid =
            |e: buying_rights::MarketError| CliError::Parse(format!("invalid scenario: {e}"));
        let mut config = match &self.generator {
            Some(g) => {
                let mut cfg = generate_dirichlet_scenario(
                    g.num_buyers,
                    g.concentration,
                    g.claim_scale,
                    self.seed.unwrap_or(0),
                )
                .map_err(invalid)?;
                if !self.sellers.is_empty() {
                    cfg.sellers = self.seller_specs();
                }
                cfg
            }
            None => MarketConfig {
                sellers: self.seller_specs(),
                buyers: self
                    .buyers
                    .iter()
                    .map(|b| {
                        Ok(BuyerSpec {
                            claim: Quantity::new(b.claim)?,
                            income: b.income.clone(),
                        })
                    })
                    .collect::<buying_rights::Result<Vec<_>>>()
                    .map_err(invalid)?,
                mechanism: self.mechanism.clone(),
                variant: self.variant,
                horizon: self.horizon,
                seller_storage_cost: 0.0,
                tolerance: 0.0,
                greedy_price_markup: 0.0,
            },
        };
        config.mechanism = self.mechanism.clone();
        config.variant = self.variant;
        config.horizon = self.horizon;
        config.seller_storage_cost = self.seller_storage_cost;
        config.tolerance = self.tolerance;
        config.greedy_price_markup = self.greedy_price_markup;
        config.validate().map_err(invalid)?;
        Ok(config)
    }

    fn seller_specs(&self) -> Vec<SellerSpec> {
        self.sellers
            .iter()
            .map(|s| SellerSpec {
                resupply: s.resupply.clone(),
            })
            .collect()
    }
}

pub fn parse_coalition(names: &[String]) -> Result<Vec<Trader>> {
    names
        .iter()
        .map(|n| n.parse::<Trader>().map_err(CliError::Parse))
        .collect()
}
