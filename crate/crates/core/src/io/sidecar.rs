//! JSON metadata stored next to an FKT file as `<file>.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tag carried by every human-facing JSON report.
pub const REPORT_SCHEMA: &str = "fleximo-report/1";

/// What a container holds. The binary format is the same for all roles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// `[D_out, C, P, P]`
    Kernel,
    /// `[D_out]`
    Bias,
    /// `[C, H, W]` or `[H, W]`
    Image,
    /// `[N, D]`
    Tokens,
    /// `[H'·W', H·W]`
    Operator,
    Features,
    Parameter,
    Spectrum,
    Entropy,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SidecarMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas_um: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gsd_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantics: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, serde_json::Value>,
}

impl SidecarMeta {
    pub fn with_role(role: Role) -> Self {
        Self {
            role: Some(role),
            ..Default::default()
        }
    }

    /// Channel axis of the companion tensor, if its role has one.
    pub fn channel_dim(&self, dims: &[usize]) -> Option<usize> {
        match (self.role?, dims) {
            (Role::Kernel, [_, c, _, _]) => Some(*c),
            (Role::Image | Role::Spectrum | Role::Entropy, [c, _, _]) => Some(*c),
            (Role::Image | Role::Spectrum | Role::Entropy, [_, _]) => Some(1),
            _ => None,
        }
    }

    /// Wavelength count must match the channel axis when both are known.
    pub fn check_against(&self, dims: &[usize]) -> Result<()> {
        if let (Some(l), Some(c)) = (&self.lambdas_um, self.channel_dim(dims)) {
            if l.len() != c {
                return Err(Error::SpectralMismatch {
                    image_channels: c,
                    kernel_channels: l.len(),
                });
            }
        }
        Ok(())
    }

    pub fn provenance_str(&self, key: &str) -> Option<&str> {
        self.provenance.get(key).and_then(|v| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl Into<serde_json::Value>) -> &mut Self {
        self.provenance.insert(key.to_owned(), value.into());
        self
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_name() {
        assert_eq!(
            sidecar_path(Path::new("out/k.fkt")),
            PathBuf::from("out/k.fkt.json")
        );
    }

    #[test]
    fn lambdas_must_match_channels() {
        let mut meta = SidecarMeta::with_role(Role::Kernel);
        meta.lambdas_um = Some(vec![0.49, 0.56]);
        assert!(meta.check_against(&[8, 2, 4, 4]).is_ok());
        assert!(matches!(
            meta.check_against(&[8, 3, 4, 4]),
            Err(Error::SpectralMismatch {
                image_channels: 3,
                kernel_channels: 2
            })
        ));
        meta.role = Some(Role::Image);
        assert!(meta.check_against(&[2, 16, 16]).is_ok());
    }

    #[test]
    fn json_shape_is_sparse() {
        let mut meta = SidecarMeta::with_role(Role::Operator);
        meta.semantics = Some("half_pixel".into());
        meta.set("src", serde_json::json!([4, 4]));
        let text = serde_json::to_string(&meta).unwrap();
        assert_eq!(
            text,
            r#"{"role":"operator","semantics":"half_pixel","provenance":{"src":[4,4]}}"#
        );
        assert_eq!(serde_json::from_str::<SidecarMeta>(&text).unwrap(), meta);
    }
}
