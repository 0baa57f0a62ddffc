use std::fmt;
use std::str::FromStr;

/// Semantic landmark groups tracked on the face and eye images.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LandmarkGroup {
    Mouth,
    NoseBase,
    Jaw,
    BrowLeft,
    BrowRight,
    EyeLeft,
    EyeRight,
}

impl LandmarkGroup {
    /// Maximum number of landmarks per group.
    pub fn capacity(self) -> u8 {
        match self {
            LandmarkGroup::Mouth => 20,
            LandmarkGroup::NoseBase => 5,
            LandmarkGroup::Jaw => 11,
            LandmarkGroup::BrowLeft | LandmarkGroup::BrowRight => 5,
            LandmarkGroup::EyeLeft | LandmarkGroup::EyeRight => 6,
        }
    }

    pub fn all() -> [LandmarkGroup; 7] {
        [
            LandmarkGroup::Mouth,
            LandmarkGroup::NoseBase,
            LandmarkGroup::Jaw,
            LandmarkGroup::BrowLeft,
            LandmarkGroup::BrowRight,
            LandmarkGroup::EyeLeft,
            LandmarkGroup::EyeRight,
        ]
    }

    fn tag(self) -> &'static str {
        match self {
            LandmarkGroup::Mouth => "mouth",
            LandmarkGroup::NoseBase => "nose_base",
            LandmarkGroup::Jaw => "jaw",
            LandmarkGroup::BrowLeft => "brow_left",
            LandmarkGroup::BrowRight => "brow_right",
            LandmarkGroup::EyeLeft => "eye_left",
            LandmarkGroup::EyeRight => "eye_right",
        }
    }

    /// True for the groups observed by the eye cameras rather than the face
    /// camera.
    pub fn is_eye_region(self) -> bool {
        matches!(
            self,
            LandmarkGroup::BrowLeft
                | LandmarkGroup::BrowRight
                | LandmarkGroup::EyeLeft
                | LandmarkGroup::EyeRight
        )
    }
}

/// A semantic landmark: group plus index within the group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LandmarkLabel {
    pub group: LandmarkGroup,
    pub index: u8,
}

impl LandmarkLabel {
    pub fn new(group: LandmarkGroup, index: u8) -> Option<Self> {
        (index < group.capacity()).then_some(Self { group, index })
    }
}

impl fmt::Display for LandmarkLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.group.tag(), self.index)
    }
}

impl FromStr for LandmarkLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (tag, idx) = s.split_once(':').ok_or_else(|| format!("bad landmark label `{s}`"))?;
        let group = LandmarkGroup::all()
            .into_iter()
            .find(|g| g.tag() == tag)
            .ok_or_else(|| format!("unknown landmark group `{tag}`"))?;
        let index: u8 = idx.parse().map_err(|_| format!("bad landmark index `{idx}`"))?;
        LandmarkLabel::new(group, index)
            .ok_or_else(|| format!("index {index} exceeds capacity of group `{tag}`"))
    }
}
