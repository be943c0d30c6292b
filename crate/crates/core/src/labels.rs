//! Modulation scheme labels and their stable integer codes.

use crate::error::{Error, Result};

/// The eleven modulation schemes the classifier distinguishes.
///
/// Codes 0..10 follow the listed order and are stable across all artifact
/// files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModulationLabel {
    Bpsk = 0,
    Qpsk = 1,
    Psk8 = 2,
    Qam16 = 3,
    Qam64 = 4,
    Cpfsk = 5,
    Gfsk = 6,
    Pam4 = 7,
    Wbfm = 8,
    AmSsb = 9,
    AmDsb = 10,
}

/// Number of modulation labels.
pub const NUM_LABELS: usize = 11;

impl ModulationLabel {
    /// All labels in code order.
    pub const ALL: [ModulationLabel; NUM_LABELS] = [
        ModulationLabel::Bpsk,
        ModulationLabel::Qpsk,
        ModulationLabel::Psk8,
        ModulationLabel::Qam16,
        ModulationLabel::Qam64,
        ModulationLabel::Cpfsk,
        ModulationLabel::Gfsk,
        ModulationLabel::Pam4,
        ModulationLabel::Wbfm,
        ModulationLabel::AmSsb,
        ModulationLabel::AmDsb,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<ModulationLabel> {
        Self::ALL
            .get(code)
            .copied()
            .ok_or_else(|| Error::Domain(format!("label code {code} out of range 0..{NUM_LABELS}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            ModulationLabel::Bpsk => "BPSK",
            ModulationLabel::Qpsk => "QPSK",
            ModulationLabel::Psk8 => "8PSK",
            ModulationLabel::Qam16 => "QAM16",
            ModulationLabel::Qam64 => "QAM64",
            ModulationLabel::Cpfsk => "CPFSK",
            ModulationLabel::Gfsk => "GFSK",
            ModulationLabel::Pam4 => "PAM4",
            ModulationLabel::Wbfm => "WBFM",
            ModulationLabel::AmSsb => "AM-SSB",
            ModulationLabel::AmDsb => "AM-DSB",
        }
    }

    pub fn from_name(name: &str) -> Result<ModulationLabel> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Config(format!("unknown modulation label {name:?}")))
    }

    /// True for the digitally modulated schemes (the analog three excluded).
    pub fn is_digital(self) -> bool {
        !matches!(
            self,
            ModulationLabel::Wbfm | ModulationLabel::AmSsb | ModulationLabel::AmDsb
        )
    }
}

/// The canonical label-name table in code order.
pub fn label_names() -> Vec<String> {
    ModulationLabel::ALL.iter().map(|l| l.name().to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_a_bijection_onto_0_to_10() {
        assert_eq!(ModulationLabel::ALL.len(), 11);
        for (i, label) in ModulationLabel::ALL.iter().enumerate() {
            assert_eq!(label.code(), i);
            assert_eq!(ModulationLabel::from_code(i).unwrap(), *label);
        }
        assert!(ModulationLabel::from_code(11).is_err());
    }

    #[test]
    fn names_round_trip() {
        for label in ModulationLabel::ALL {
            assert_eq!(ModulationLabel::from_name(label.name()).unwrap(), label);
        }
        assert_eq!(ModulationLabel::from_name("am-ssb").unwrap(), ModulationLabel::AmSsb);
        assert!(ModulationLabel::from_name("FM").is_err());
    }
}
