use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Four-way help-seeking / help-offering label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Request,
    Offer,
    RequestAndOffer,
    Irrelevant,
}

impl Label {
    pub const ALL: [Label; 4] = [
        Label::Request,
        Label::Offer,
        Label::RequestAndOffer,
        Label::Irrelevant,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Request => "Request",
            Label::Offer => "Offer",
            Label::RequestAndOffer => "RequestAndOffer",
            Label::Irrelevant => "Irrelevant",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    /// Accepts the canonical names plus the spelled-out "Request and Offer"
    /// form, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        match key.as_str() {
            "request" => Ok(Label::Request),
            "offer" => Ok(Label::Offer),
            "requestandoffer" | "requestoffer" => Ok(Label::RequestAndOffer),
            "irrelevant" => Ok(Label::Irrelevant),
            _ => Err(Error::Parse(format!("unknown label {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_variants() {
        assert_eq!("Request and Offer".parse::<Label>().unwrap(), Label::RequestAndOffer);
        assert_eq!(" offer ".parse::<Label>().unwrap(), Label::Offer);
        assert_eq!("RequestAndOffer".parse::<Label>().unwrap(), Label::RequestAndOffer);
        assert!("maybe".parse::<Label>().is_err());
        for l in Label::ALL {
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
            assert_eq!(Label::from_index(l.index()), Some(l));
        }
    }
}
