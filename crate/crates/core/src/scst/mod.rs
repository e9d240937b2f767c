//! Self-critical sequence training with the PAC score as reward.
//!
//! A deliberately small captioner ([`ToyPolicy`]) keeps every quantity exact:
//! sequence probabilities can be enumerated, so the REINFORCE estimator and
//! its baseline can be checked against the true gradient of the expected
//! reward. Grammar diagnostics (Rep-n, bad endings) judge generated captions.

mod beam;
mod demo;
mod grammar;
mod policy;
mod reward;
mod train;
mod world;

pub use beam::{beam_search, greedy_decode, Beam};
pub use demo::{run_demo, CaptionSnapshot, DemoConfig, DemoReport};
pub use grammar::{pct_incorrect_endings, rep_n, tokenize, EndingStats, GrammarConfig, DEFAULT_STOPLIST};
pub use policy::ToyPolicy;
pub use reward::{baseline, caption_embedding, reward, scst_gradient};
pub use train::{mean_top_beam_reward, scst_train, xent_grad, xent_loss, xent_train, Example, ScstConfig, ScstOutcome, XentConfig};
pub use world::{CaptionWorld, EOS};
