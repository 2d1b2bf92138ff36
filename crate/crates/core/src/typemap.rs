//! Datatype layouts: the byte-level typemap shared by the backends (to pack
//! outgoing buffers) and the runtime (to unpack drained payloads after a
//! restart without going through the backend).

use std::fmt;

/// The primitive datatypes known to every backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NamedType {
    Byte,
    Char,
    Int8,
    Int,
    Int64,
    Double,
}

impl NamedType {
    pub const ALL: [NamedType; 6] = [
        NamedType::Byte,
        NamedType::Char,
        NamedType::Int8,
        NamedType::Int,
        NamedType::Int64,
        NamedType::Double,
    ];

    pub fn size(self) -> usize {
        match self {
            NamedType::Byte | NamedType::Char | NamedType::Int8 => 1,
            NamedType::Int => 4,
            NamedType::Int64 | NamedType::Double => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NamedType::Byte => "BYTE",
            NamedType::Char => "CHAR",
            NamedType::Int8 => "INT8",
            NamedType::Int => "INT",
            NamedType::Int64 => "INT64",
            NamedType::Double => "DOUBLE",
        }
    }

    pub fn from_name(name: &str) -> Option<NamedType> {
        NamedType::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Position in [`NamedType::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NamedType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LayoutError {
    #[error("buffer of {have} bytes too small, layout needs {need}")]
    BufferTooSmall { need: usize, have: usize },
    #[error("payload of {0} bytes is not a whole number of elements of size {1}")]
    RaggedPayload(usize, usize),
    #[error("payload of {have} bytes exceeds receive capacity of {cap}")]
    Truncated { cap: usize, have: usize },
    #[error("negative or zero-sized layout argument")]
    BadArgument,
}

/// A flattened typemap: `(offset, len)` byte blocks within one instance,
/// the instance extent and the homogeneous element type if there is one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<(usize, usize)>,
    extent: usize,
    size: usize,
    elem: Option<NamedType>,
}

impl Layout {
    pub fn named(t: NamedType) -> Layout {
        Layout {
            blocks: vec![(0, t.size())],
            extent: t.size(),
            size: t.size(),
            elem: Some(t),
        }
    }

    pub fn contiguous(count: i32, child: &Layout) -> Result<Layout, LayoutError> {
        if count < 0 {
            return Err(LayoutError::BadArgument);
        }
        let count = count as usize;
        let mut out = Layout::empty(child.elem);
        for i in 0..count {
            out.push_instance(i * child.extent, child);
        }
        out.extent = count * child.extent;
        Ok(out)
    }

    pub fn vector(count: i32, blocklen: i32, stride: i32, child: &Layout) -> Result<Layout, LayoutError> {
        if count < 0 || blocklen < 0 || stride < 0 {
            return Err(LayoutError::BadArgument);
        }
        let (count, blocklen, stride) = (count as usize, blocklen as usize, stride as usize);
        let mut out = Layout::empty(child.elem);
        for i in 0..count {
            for j in 0..blocklen {
                out.push_instance((i * stride + j) * child.extent, child);
            }
        }
        out.extent = if count == 0 {
            0
        } else {
            ((count - 1) * stride + blocklen) * child.extent
        };
        Ok(out)
    }

    fn empty(elem: Option<NamedType>) -> Layout {
        Layout { blocks: Vec::new(), extent: 0, size: 0, elem }
    }

    fn push_instance(&mut self, base: usize, child: &Layout) {
        for &(off, len) in &child.blocks {
            let off = base + off;
            match self.blocks.last_mut() {
                Some(last) if last.0 + last.1 == off => last.1 += len,
                _ => self.blocks.push((off, len)),
            }
            self.size += len;
        }
    }

    /// Bytes of actual data in one instance.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn elem(&self) -> Option<NamedType> {
        self.elem
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    /// Span of user buffer touched by `count` instances.
    pub fn span(&self, count: usize) -> usize {
        if count == 0 {
            return 0;
        }
        let last_end = self.blocks.iter().map(|&(o, l)| o + l).max().unwrap_or(0);
        (count - 1) * self.extent + last_end
    }

    pub fn pack(&self, buf: &[u8], count: usize) -> Result<Vec<u8>, LayoutError> {
        let need = self.span(count);
        if buf.len() < need {
            return Err(LayoutError::BufferTooSmall { need, have: buf.len() });
        }
        let mut out = Vec::with_capacity(self.size * count);
        for i in 0..count {
            let base = i * self.extent;
            for &(off, len) in &self.blocks {
                out.extend_from_slice(&buf[base + off..base + off + len]);
            }
        }
        Ok(out)
    }

    /// Scatter `data` into `buf` as up to `count` instances. Returns the
    /// number of bytes consumed (always `data.len()`).
    pub fn unpack(&self, data: &[u8], buf: &mut [u8], count: usize) -> Result<usize, LayoutError> {
        let cap = self.size * count;
        if data.len() > cap {
            return Err(LayoutError::Truncated { cap, have: data.len() });
        }
        if self.size == 0 {
            return Ok(0);
        }
        let instances = data.len().div_ceil(self.size);
        let need = self.span(instances);
        if buf.len() < need {
            return Err(LayoutError::BufferTooSmall { need, have: buf.len() });
        }
        let mut src = data;
        'outer: for i in 0..instances {
            let base = i * self.extent;
            for &(off, len) in &self.blocks {
                if src.is_empty() {
                    break 'outer;
                }
                let n = len.min(src.len());
                buf[base + off..base + off + n].copy_from_slice(&src[..n]);
                src = &src[n..];
            }
        }
        Ok(data.len())
    }
}
