use std::fmt;
use std::path::Path;

/// Failure reported as one `error: kind=<Kind> msg=<text>` line.
#[derive(Debug)]
pub struct CliError {
    pub kind: String,
    pub msg: String,
    pub usage: bool,
}

impl CliError {
    pub fn new(kind: &str, msg: impl Into<String>) -> Self {
        CliError {
            kind: kind.to_string(),
            msg: msg.into(),
            usage: false,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError {
            usage: true,
            ..CliError::new("UsageError", msg)
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::new("Io", format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        if self.usage {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = self.msg.replace('\n', " ");
        write!(f, "error: kind={} msg={msg}", self.kind)
    }
}

macro_rules! kind_error {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::new(e.kind(), e.to_string())
            }
        }
    )*};
}

kind_error!(
    evstack_core::events::EventError,
    evstack_core::events::EventsFileError,
    evstack_core::events::ApsError,
    evstack_core::stacking::StackError,
    evstack_core::video::VideoError,
    evstack_core::simulator::SimError,
    evstack_core::metrics::MetricError,
    evstack_core::dataset::DatasetError,
    evstack_core::image::ImageError,
    evstack_cgan::CganError
);
