/// Depth image in metres, row-major. Zero or non-finite entries are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height, "depth buffer size mismatch");
        DepthImage {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, depth: f32) -> Self {
        DepthImage::new(width, height, vec![depth; width * height])
    }

    /// Converts raw sensor units (e.g. 16-bit PNG values) with `scale`
    /// metres per unit; raw zero stays invalid.
    pub fn from_raw(width: usize, height: usize, raw: &[u16], scale: f64) -> Self {
        let data = raw.iter().map(|&r| (r as f64 * scale) as f32).collect();
        DepthImage::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, depth: f32) {
        self.data[v * self.width + u] = depth;
    }

    pub fn row(&self, v: usize) -> &[f32] {
        &self.data[v * self.width..(v + 1) * self.width]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn byte_size(&self) -> usize {
        self.data.len() * std::mem::size_of::<f32>()
    }
}
