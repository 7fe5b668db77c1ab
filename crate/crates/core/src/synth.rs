//! Synthetic ticket generator for self-contained benchmarks.
//!
//! Documents are bags of class keywords, contaminating keywords and shared
//! noise. The minority class (Change) deliberately borrows majority-class
//! (Problem) vocabulary while Problem leaks a little Change vocabulary back,
//! so prior-driven classifiers under-recall the minority class the way the
//! real imbalanced corpus does, while the classes stay easily separable
//! overall. All draws come from one seeded generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Label, RawTicket};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Documents per class, Change/Problem/Request.
    pub counts: [usize; 3],
    pub seed: u64,
    pub keywords_per_class: usize,
    pub noise_words: usize,
    /// Inclusive token-count range per document.
    pub doc_len: (usize, usize),
    /// Own-keyword rate for the majority classes (rest is noise).
    pub own_rate: f64,
    /// Own-keyword rate for the minority class.
    pub minority_own_rate: f64,
    /// Rate at which minority documents borrow Problem keywords.
    pub minority_contamination: f64,
    /// Rate at which Problem documents leak Change keywords.
    pub majority_leak: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            counts: [120, 720, 360],
            seed: 7,
            keywords_per_class: 12,
            noise_words: 30,
            doc_len: (6, 12),
            own_rate: 0.55,
            minority_own_rate: 0.46,
            minority_contamination: 0.25,
            majority_leak: 0.04,
        }
    }
}

fn keyword(label: Label, index: usize) -> String {
    match label {
        Label::Change => format!("chg{index}"),
        Label::Problem => format!("prb{index}"),
        Label::Request => format!("req{index}"),
    }
}

/// Generate tickets class by class in a fixed order, deterministically.
pub fn generate(config: &SynthConfig) -> Vec<RawTicket> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.keywords_per_class;
    let mut tickets = Vec::new();
    let mut row = 1usize;
    for label in Label::ALL {
        for _ in 0..config.counts[label.index()] {
            let len = rng.random_range(config.doc_len.0..=config.doc_len.1);
            let mut tokens = Vec::with_capacity(len);
            for _ in 0..len {
                let r: f64 = rng.random();
                let token = match label {
                    Label::Change => {
                        if r < config.minority_own_rate {
                            keyword(Label::Change, rng.random_range(0..k))
                        } else if r < config.minority_own_rate + config.minority_contamination {
                            keyword(Label::Problem, rng.random_range(0..k))
                        } else {
                            format!("noise{}", rng.random_range(0..config.noise_words))
                        }
                    }
                    Label::Problem => {
                        if r < config.majority_leak {
                            keyword(Label::Change, rng.random_range(0..k))
                        } else if r < config.majority_leak + config.own_rate {
                            keyword(Label::Problem, rng.random_range(0..k))
                        } else {
                            format!("noise{}", rng.random_range(0..config.noise_words))
                        }
                    }
                    Label::Request => {
                        if r < config.own_rate {
                            keyword(Label::Request, rng.random_range(0..k))
                        } else {
                            format!("noise{}", rng.random_range(0..config.noise_words))
                        }
                    }
                };
                tokens.push(token);
            }
            let split = (tokens.len() / 3).max(1);
            tickets.push(RawTicket {
                subject: tokens[..split].join(" "),
                body: tokens[split..].join(" "),
                label_text: label.name().to_string(),
                language_tag: Some("en".to_string()),
                source_row: row,
            });
            row += 1;
        }
    }
    tickets
}

/// Write tickets as a CSV compatible with the default column map.
pub fn write_csv(tickets: &[RawTicket], path: &std::path::Path) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["subject", "body", "type", "language"])?;
    for t in tickets {
        writer.write_record([
            t.subject.as_str(),
            t.body.as_str(),
            t.label_text.as_str(),
            t.language_tag.as_deref().unwrap_or(""),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
