//! Chemical element symbols H through Og.

pub const SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

pub fn is_symbol(s: &str) -> bool {
    SYMBOLS.contains(&s)
}

/// Normalizes case (`FE` / `fe` -> `Fe`) and returns the canonical symbol if valid.
pub fn normalize(s: &str) -> Option<&'static str> {
    let mut chars = s.chars();
    let first = chars.next()?.to_ascii_uppercase();
    let rest: String = chars.map(|c| c.to_ascii_lowercase()).collect();
    let candidate = format!("{first}{rest}");
    SYMBOLS.iter().copied().find(|&sym| sym == candidate)
}

/// Extracts an element from a CIF type symbol or site label such as `Si4+`, `O2-`, `Fe1a`
/// or `OW1`. The leading alphabetic run is tried as two letters, then one.
pub fn from_label(label: &str) -> Option<&'static str> {
    let letters: String = label
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect();
    if letters.is_empty() {
        return None;
    }
    if letters.len() >= 2 {
        if let Some(sym) = normalize(&letters[..2]) {
            return Some(sym);
        }
    }
    normalize(&letters[..1])
}
