//! ICD-9 code normalization and the built-in reference code list used by the
//! synthetic generator.

use super::CodeKind;

/// MIMIC stores codes without the dot (`42731`); everything downstream uses
/// the dotted form (`427.31`). Already-dotted codes pass through unchanged.
pub fn normalize_code(raw: &str, kind: CodeKind) -> String {
    let code = raw.trim();
    if code.contains('.') || code.is_empty() {
        return code.to_string();
    }
    let split = match kind {
        CodeKind::Procedure => 2,
        CodeKind::Diagnosis if code.starts_with('E') || code.starts_with('e') => 4,
        CodeKind::Diagnosis => 3,
    };
    if code.len() > split && code.is_char_boundary(split) {
        format!("{}.{}", &code[..split], &code[split..])
    } else {
        code.to_string()
    }
}

/// Strip the dot again, for writing MIMIC-shaped tables.
pub fn undotted(code: &str) -> String {
    code.replace('.', "")
}

/// Dotted procedure codes have two digits before the dot; diagnosis codes
/// have three (or a V/E prefix).
pub fn infer_kind(code: &str) -> CodeKind {
    match code.find('.') {
        Some(2) => CodeKind::Procedure,
        _ => CodeKind::Diagnosis,
    }
}

/// The fifty most frequent MIMIC-III discharge-summary codes with their long titles.
pub const REFERENCE_CODES: &[(&str, &str)] = &[
    ("401.9", "Unspecified essential hypertension"),
    ("38.93", "Venous catheterization, not elsewhere classified"),
    ("428.0", "Congestive heart failure, unspecified"),
    ("427.31", "Atrial fibrillation"),
    ("414.01", "Coronary atherosclerosis of native coronary artery"),
    ("96.04", "Insertion of endotracheal tube"),
    ("96.6", "Enteral infusion of concentrated nutritional substances"),
    ("584.9", "Acute kidney failure, unspecified"),
    ("250.00", "Diabetes mellitus without mention of complication, type II or unspecified type, not stated as uncontrolled"),
    ("96.71", "Continuous invasive mechanical ventilation for less than 96 consecutive hours"),
    ("272.4", "Other and unspecified hyperlipidemia"),
    ("518.81", "Acute respiratory failure"),
    ("99.04", "Transfusion of packed cells"),
    ("39.61", "Extracorporeal circulation auxiliary to open heart surgery"),
    ("599.0", "Urinary tract infection, site not specified"),
    ("530.81", "Esophageal reflux"),
    ("96.72", "Continuous invasive mechanical ventilation for 96 consecutive hours or more"),
    ("272.0", "Pure hypercholesterolemia"),
    ("285.9", "Anemia, unspecified"),
    ("88.56", "Coronary arteriography using two catheters"),
    ("244.9", "Unspecified acquired hypothyroidism"),
    ("486", "Pneumonia, organism unspecified"),
    ("38.91", "Arterial catheterization"),
    ("285.1", "Acute posthemorrhagic anemia"),
    ("36.15", "Single internal mammary-coronary artery bypass"),
    ("276.2", "Acidosis"),
    ("496", "Chronic airway obstruction, not elsewhere classified"),
    ("99.15", "Parenteral infusion of concentrated nutritional substances"),
    ("995.92", "Severe sepsis"),
    ("V58.61", "Long-term (current) use of anticoagulants"),
    ("507.0", "Pneumonitis due to inhalation of food or vomitus"),
    ("038.9", "Unspecified septicemia"),
    ("88.72", "Diagnostic ultrasound of heart"),
    ("585.9", "Chronic kidney disease, unspecified"),
    ("403.90", "Hypertensive chronic kidney disease, unspecified, with chronic kidney disease stage I through stage IV, or unspecified"),
    ("311", "Depressive disorder, not elsewhere classified"),
    ("305.1", "Tobacco use disorder"),
    ("37.22", "Left heart cardiac catheterization"),
    ("412", "Old myocardial infarction"),
    ("33.24", "Closed [endoscopic] biopsy of bronchus"),
    ("39.95", "Hemodialysis"),
    ("287.5", "Thrombocytopenia, unspecified"),
    ("410.71", "Subendocardial infarction, initial episode of care"),
    ("276.1", "Hyposmolality and/or hyponatremia"),
    ("V45.81", "Aortocoronary bypass status"),
    ("424.0", "Mitral valve disorders"),
    ("45.13", "Other endoscopy of small intestine"),
    ("V15.82", "History of tobacco use"),
    ("511.9", "Unspecified pleural effusion"),
    ("37.23", "Combined right and left heart cardiac catheterization"),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dots_follow_icd9_conventions() {
        assert_eq!(normalize_code("42731", CodeKind::Diagnosis), "427.31");
        assert_eq!(normalize_code("486", CodeKind::Diagnosis), "486");
        assert_eq!(normalize_code("V5861", CodeKind::Diagnosis), "V58.61");
        assert_eq!(normalize_code("E8497", CodeKind::Diagnosis), "E849.7");
        assert_eq!(normalize_code("3893", CodeKind::Procedure), "38.93");
        assert_eq!(normalize_code("966", CodeKind::Procedure), "96.6");
        assert_eq!(normalize_code("427.31", CodeKind::Diagnosis), "427.31");
    }

    #[test]
    fn reference_codes_round_trip_through_mimic_form() {
        for (code, _) in REFERENCE_CODES {
            let kind = infer_kind(code);
            assert_eq!(&normalize_code(&undotted(code), kind), code);
        }
    }
}
