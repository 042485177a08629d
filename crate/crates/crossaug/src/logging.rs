//! One `key=value` line per event on stderr.

use std::io::Write;

use log::{Level, LevelFilter, Log, Metadata, Record};

struct StderrLog {
    level: LevelFilter,
}

impl Log for StderrLog {
    fn enabled(&self, metadata: &Metadata<'_>) -> bool {
        metadata.level() <= self.level
    }

    fn log(&self, record: &Record<'_>) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let level = match record.level() {
            Level::Error => "error",
            Level::Warn => "warn",
            Level::Info => "info",
            Level::Debug => "debug",
            Level::Trace => "trace",
        };
        let msg = record.args().to_string();
        let line = if msg.starts_with("event=") {
            format!("level={level} {msg}")
        } else {
            format!("level={level} event=message msg={msg:?}")
        };
        let _ = writeln!(std::io::stderr().lock(), "{line}");
    }

    fn flush(&self) {}
}

/// Installs the logger once; later calls only adjust the level.
pub fn init(level: LevelFilter) {
    static LOGGER: std::sync::OnceLock<StderrLog> = std::sync::OnceLock::new();
    let logger = LOGGER.get_or_init(|| StderrLog { level: LevelFilter::Trace });
    let _ = log::set_logger(logger);
    log::set_max_level(level);
}
