use serde::{Deserialize, Serialize};

/// Which queue family an artifact describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    /// GI/GI/c with identical servers.
    Ggc,
    /// GI/GI_i/2 with two heterogeneous servers.
    Gg2,
}

impl SystemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SystemKind::Ggc => "ggc",
            SystemKind::Gg2 => "gg2",
        }
    }
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SystemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ggc" => Ok(SystemKind::Ggc),
            "gg2" => Ok(SystemKind::Gg2),
            other => Err(format!("unknown system '{other}' (expected ggc or gg2)")),
        }
    }
}
