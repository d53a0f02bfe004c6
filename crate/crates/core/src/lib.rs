//! Skeleton sequences as images.
//!
//! A skeleton frame becomes a small image patch (a *Skepxel*) by laying its
//! joint indices out on a grid and storing each joint's `x, y, z` in three
//! channels. Several differently arranged Skepxels of the same frame are
//! stacked vertically, and consecutive frames are placed side by side, so a
//! window of `n` frames turns into one `H x W x 3` image ([`codec`]). Joint
//! velocities give three more channels. A video yields several such images;
//! per-image features are summarized over time with a Fourier Temporal
//! Pyramid ([`ftp`]) and classified ([`recognizer`]).
//!
//! ```
//! use skepxel::arrangement::{generate_set, GammaThreshold};
//! use skepxel::codec::{encode_window, plan_windows, ImageKind};
//! use skepxel::normalize::normalize_pose;
//! use skepxel::recognizer::{synth_actions, SynthConfig};
//!
//! let data = synth_actions(&SynthConfig::default())?;
//! let set = generate_set(5, 5, 36, GammaThreshold::Auto, 7, 10_000)?;
//! let seq = normalize_pose(&data.sequences[0]);
//! let plan = plan_windows(seq.len(), 36, 18)?;
//! let img = encode_window(&seq, &set, &plan.windows[0], ImageKind::LocationVelocity)?;
//! assert_eq!((img.height(), img.width(), img.channels()), (180, 180, 6));
//! # Ok::<(), skepxel::Error>(())
//! ```

pub mod arrangement;
pub mod codec;
mod error;
pub mod ftp;
pub mod normalize;
pub mod pipeline;
pub mod recognizer;
pub mod skeleton;

pub use error::{Error, Result};

// The book's snippets run as doc-tests so the guide can't drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/skepxels.md")]
    mod skepxels {}
    #[doc = include_str!("../../../book/src/arrangements.md")]
    mod arrangements {}
    #[doc = include_str!("../../../book/src/windows.md")]
    mod windows {}
    #[doc = include_str!("../../../book/src/normalization.md")]
    mod normalization {}
    #[doc = include_str!("../../../book/src/pyramid.md")]
    mod pyramid {}
    #[doc = include_str!("../../../book/src/recognition.md")]
    mod recognition {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
