//! Modality configurations.

use core::fmt;

/// Which of edit code, guidance and context feed the model, and what it
/// predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phi {
    C,
    Cg,
    /// Context with `<START>`/`<END>` around the edited fragment.
    CAnnotated,
    CgAnnotated,
    E,
    Eg,
    Ec,
    Ecg,
    /// Context in, whole edited function out.
    FullCode,
    FullCodeG,
}

/// The three input channels, in serialization order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Edit,
    Guidance,
    Context,
}

impl Modality {
    pub fn field(self) -> &'static str {
        match self {
            Modality::Edit => "e_p",
            Modality::Guidance => "guidance",
            Modality::Context => "code_before",
        }
    }
}

impl Phi {
    pub const ALL: [Phi; 10] = [
        Phi::C,
        Phi::Cg,
        Phi::CAnnotated,
        Phi::CgAnnotated,
        Phi::E,
        Phi::Eg,
        Phi::Ec,
        Phi::Ecg,
        Phi::FullCode,
        Phi::FullCodeG,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Phi::C => "c",
            Phi::Cg => "cg",
            Phi::CAnnotated => "c_annot",
            Phi::CgAnnotated => "cg_annot",
            Phi::E => "e",
            Phi::Eg => "eg",
            Phi::Ec => "ec",
            Phi::Ecg => "ecg",
            Phi::FullCode => "full_code",
            Phi::FullCodeG => "full_code_g",
        }
    }

    /// Accepts the plain id, `Φ_`-prefixed labels and `†` for annotation.
    pub fn from_id(s: &str) -> Option<Phi> {
        let s = s.strip_prefix("Φ_").or_else(|| s.strip_prefix("phi_")).unwrap_or(s);
        let s = match s {
            "c†" => "c_annot",
            "cg†" => "cg_annot",
            other => other,
        };
        Self::ALL.into_iter().find(|p| p.id() == s)
    }

    pub fn label(self) -> &'static str {
        match self {
            Phi::C => "Φ_c",
            Phi::Cg => "Φ_cg",
            Phi::CAnnotated => "Φ_c†",
            Phi::CgAnnotated => "Φ_cg†",
            Phi::E => "Φ_e",
            Phi::Eg => "Φ_eg",
            Phi::Ec => "Φ_ec",
            Phi::Ecg => "Φ_ecg",
            Phi::FullCode => "full_code",
            Phi::FullCodeG => "full_code_g",
        }
    }

    pub fn edit(self) -> bool {
        matches!(self, Phi::E | Phi::Eg | Phi::Ec | Phi::Ecg)
    }

    pub fn guidance(self) -> bool {
        matches!(self, Phi::Cg | Phi::CgAnnotated | Phi::Eg | Phi::Ecg | Phi::FullCodeG)
    }

    pub fn context(self) -> bool {
        !matches!(self, Phi::E | Phi::Eg)
    }

    pub fn annotated(self) -> bool {
        matches!(self, Phi::CAnnotated | Phi::CgAnnotated)
    }

    pub fn full_code(self) -> bool {
        matches!(self, Phi::FullCode | Phi::FullCodeG)
    }

    /// Retained inputs in serialization order.
    pub fn modalities(self) -> impl Iterator<Item = Modality> {
        [
            (self.edit(), Modality::Edit),
            (self.guidance(), Modality::Guidance),
            (self.context(), Modality::Context),
        ]
        .into_iter()
        .filter_map(|(on, m)| on.then_some(m))
    }

    pub fn modality_count(self) -> usize {
        self.modalities().count()
    }
}

impl fmt::Display for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}
