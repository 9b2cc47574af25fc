//! Camera-to-ledger class attendance: HOG face detection, gallery
//! identification under a distance tolerance and attendance CSV export.
//!
//! The modules build on each other bottom-up:
//! [`image_io`] -> [`hog`] -> [`detector`] -> [`gallery`] -> [`attendance`],
//! with [`bench`] timing the detector. Sliding-window scoring runs on rayon
//! when the `parallel` feature is enabled (the default); see [`par`].

pub mod attendance;
pub mod bench;
pub mod detector;
pub mod gallery;
pub mod hog;
pub mod image_io;
pub mod par;
