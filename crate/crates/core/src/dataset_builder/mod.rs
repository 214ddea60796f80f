//! Labelled-dataset construction from a multi-annotator matrix: unanimous
//! agreement filtering, validation-sample sizing and drawing, and Cohen's
//! kappa against human annotators.

mod agreement;
mod kappa;
mod label;
mod sampling;

pub use agreement::{agreement_filter, attach_text, AgreedRecord, AgreementResult, AnnotationMatrix};
pub use kappa::{
    cohens_kappa, interpretation_band, read_label_csv, validation_report, HumanAgreement, KappaReport,
    ValidationReport,
};
pub use label::Label;
pub use sampling::{sample_size, stratified_validation_sample, SamplePlan, FORCED_INCLUSION_THRESHOLD};
