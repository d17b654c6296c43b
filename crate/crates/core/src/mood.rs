//! The six listening moods and a fixed-size per-mood map.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mood {
    Chill,
    Focus,
    Melancholy,
    Motivation,
    Party,
    YouAndMe,
}

impl Mood {
    pub const ALL: [Mood; 6] = [
        Mood::Chill,
        Mood::Focus,
        Mood::Melancholy,
        Mood::Motivation,
        Mood::Party,
        Mood::YouAndMe,
    ];

    pub const COUNT: usize = 6;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Mood> {
        Self::ALL.get(i).copied()
    }

    /// Enumerant name, as spelled in labels and score files.
    pub fn name(self) -> &'static str {
        match self {
            Mood::Chill => "Chill",
            Mood::Focus => "Focus",
            Mood::Melancholy => "Melancholy",
            Mood::Motivation => "Motivation",
            Mood::Party => "Party",
            Mood::YouAndMe => "YouAndMe",
        }
    }

    /// Lower-case identifier used by the HTTP API.
    pub fn id(self) -> &'static str {
        match self {
            Mood::Chill => "chill",
            Mood::Focus => "focus",
            Mood::Melancholy => "melancholy",
            Mood::Motivation => "motivation",
            Mood::Party => "party",
            Mood::YouAndMe => "you_and_me",
        }
    }

    /// Name shown to listeners.
    pub fn display_name(self) -> &'static str {
        match self {
            Mood::YouAndMe => "You & Me",
            other => other.name(),
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Mood::Chill => {
                "Time to kick back? Relax with your favorite artists that help you unwind and let go."
            }
            Mood::Focus => {
                "No distractions, please! Let us help you stay in your zone with the right kind of music to help you achieve your goal."
            }
            Mood::Melancholy => {
                "We all get the blues now and then. If you are in the mood for a good cry or want to wallow in sorrow – let it all out here."
            }
            Mood::Motivation => {
                "Need a little nudge? Make workouts a joyful experience with a power mix to keep you moving."
            }
            Mood::Party => {
                "Whether it’s a party of one or party of more, get in the spirit with an endless mix of crowd-pleasing music to get you dancing."
            }
            Mood::YouAndMe => {
                "Feeling a little frisky? Let us set the mood for romance with feel-good tracks that you and your partner will love."
            }
        }
    }

    /// Parses an API id (`"you_and_me"`).
    pub fn from_id(s: &str) -> Option<Mood> {
        Self::ALL.into_iter().find(|m| m.id() == s)
    }
}

impl fmt::Display for Mood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown mood {0:?}")]
pub struct UnknownMood(pub String);

impl FromStr for Mood {
    type Err = UnknownMood;

    /// Accepts the exact enumerant name only.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMood(s.to_string()))
    }
}

/// One value per mood.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MoodMap<V>(pub [V; Mood::COUNT]);

impl<V: Copy> MoodMap<V> {
    pub fn splat(v: V) -> Self {
        MoodMap([v; Mood::COUNT])
    }
}

impl<V> MoodMap<V> {
    pub fn from_fn(mut f: impl FnMut(Mood) -> V) -> Self {
        MoodMap(std::array::from_fn(|i| f(Mood::ALL[i])))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Mood, &V)> {
        Mood::ALL.into_iter().zip(self.0.iter())
    }
}

impl<V> Index<Mood> for MoodMap<V> {
    type Output = V;
    fn index(&self, m: Mood) -> &V {
        &self.0[m.index()]
    }
}

impl<V> IndexMut<Mood> for MoodMap<V> {
    fn index_mut(&mut self, m: Mood) -> &mut V {
        &mut self.0[m.index()]
    }
}
