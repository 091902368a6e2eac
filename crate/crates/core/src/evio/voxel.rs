use crate::event::EventStream;

/// Dense `(2·bins, height, width)` tensor in row-major order. Channels
/// `[0, bins)` hold positive events, `[bins, 2·bins)` negative ones.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub bins: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub t_start: u64,
    pub t_end: u64,
}

impl VoxelGrid {
    pub fn shape(&self) -> (usize, usize, usize) {
        (2 * self.bins, self.height, self.width)
    }

    #[inline]
    pub fn index(&self, channel: usize, y: usize, x: usize) -> usize {
        (channel * self.height + y) * self.width + x
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f64 {
        self.values[self.index(channel, y, x)]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sum over one polarity block: `true` for the positive channels.
    pub fn polarity_total(&self, positive: bool) -> f64 {
        let plane = self.height * self.width;
        let start = if positive { 0 } else { self.bins * plane };
        self.values[start..start + self.bins * plane].iter().sum()
    }
}

/// Voxelizes with a bilinear temporal kernel over `bins` anchors placed at
/// normalized times `0..bins-1`. Each event contributes total weight 1.
///
/// A zero-duration stream puts all weight in bin 0.
pub fn to_voxel_grid(stream: &EventStream, bins: usize) -> VoxelGrid {
    assert!(bins >= 1, "voxel grid needs at least one bin");
    let width = stream.geometry.width as usize;
    let height = stream.geometry.height as usize;
    let t_start = stream.events.first().map_or(0, |e| e.t);
    let t_end = stream.events.last().map_or(0, |e| e.t);
    let mut grid = VoxelGrid {
        bins,
        height,
        width,
        values: vec![0.0; 2 * bins * height * width],
        t_start,
        t_end,
    };
    let span = (t_end - t_start) as f64;
    let scale = if span > 0.0 { (bins - 1) as f64 / span } else { 0.0 };

    for e in &stream.events {
        let t_star = (e.t - t_start) as f64 * scale;
        let lower = (t_star.floor() as usize).min(bins - 1);
        // rounding can push the last event just past the final anchor
        let frac = if lower == bins - 1 { 0.0 } else { t_star - lower as f64 };
        let block = if e.is_positive() { 0 } else { bins };
        let (x, y) = (e.x as usize, e.y as usize);

        let i = grid.index(block + lower, y, x);
        grid.values[i] += 1.0 - frac;
        if frac > 0.0 {
            let j = grid.index(block + lower + 1, y, x);
            grid.values[j] += frac;
        }
    }
    grid
}
