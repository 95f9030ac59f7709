//! Minimal event logging controlled by the `MPG_LOG` environment variable.
//!
//! `MPG_LOG=info` reports notable decode events (overflow caps, bound
//! freezes/unfreezes, fallback cap commits); `MPG_LOG=debug` adds
//! per-candidate detail. Unset or anything else disables logging.

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Level {
    Off,
    Info,
    Debug,
}

static LEVEL: OnceLock<Level> = OnceLock::new();

pub(crate) fn level() -> Level {
    *LEVEL.get_or_init(|| match std::env::var("MPG_LOG").as_deref() {
        Ok("debug") => Level::Debug,
        Ok("info") => Level::Info,
        _ => Level::Off,
    })
}

pub(crate) fn info(args: std::fmt::Arguments<'_>) {
    if level() >= Level::Info {
        eprintln!("[mpg info] {args}");
    }
}

pub(crate) fn debug(args: std::fmt::Arguments<'_>) {
    if level() >= Level::Debug {
        eprintln!("[mpg debug] {args}");
    }
}

macro_rules! log_info {
    ($($arg:tt)*) => { $crate::event_log::info(format_args!($($arg)*)) };
}

macro_rules! log_debug {
    ($($arg:tt)*) => { $crate::event_log::debug(format_args!($($arg)*)) };
}

pub(crate) use {log_debug, log_info};
