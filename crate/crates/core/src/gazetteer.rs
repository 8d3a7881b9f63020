//! Character-level trie over entity phrases and the per-token membership flags
//! derived from it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::labels::EntityType;
use crate::text::{is_punct, nfc};
use crate::{io, Error, Result};

/// A set of entity types, one bit per [`EntityType`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TagSet(u8);

impl TagSet {
    pub const EMPTY: TagSet = TagSet(0);
    const MASK: u8 = (1 << EntityType::ALL.len()) - 1;

    pub fn single(tag: EntityType) -> Self {
        TagSet(1 << tag.index())
    }

    pub fn contains(self, tag: EntityType) -> bool {
        self.0 & (1 << tag.index()) != 0
    }

    pub fn insert(&mut self, tag: EntityType) -> bool {
        let had = self.contains(tag);
        self.0 |= 1 << tag.index();
        !had
    }

    pub fn union(self, other: TagSet) -> TagSet {
        TagSet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = EntityType> {
        EntityType::ALL.into_iter().filter(move |&t| self.contains(t))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    fn from_bits(bits: u8) -> Option<Self> {
        (bits & !Self::MASK == 0).then_some(TagSet(bits))
    }
}

impl FromIterator<EntityType> for TagSet {
    fn from_iter<I: IntoIterator<Item = EntityType>>(iter: I) -> Self {
        let mut set = TagSet::EMPTY;
        for t in iter {
            set.insert(t);
        }
        set
    }
}

impl fmt::Display for TagSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(EntityType::as_str).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// Six per-token membership flags. Several may be set at once.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GazetteerFeatures(pub TagSet);

impl GazetteerFeatures {
    pub fn is_per(self) -> bool {
        self.0.contains(EntityType::Per)
    }
    pub fn is_loc(self) -> bool {
        self.0.contains(EntityType::Loc)
    }
    pub fn is_grp(self) -> bool {
        self.0.contains(EntityType::Grp)
    }
    pub fn is_corp(self) -> bool {
        self.0.contains(EntityType::Corp)
    }
    pub fn is_cw(self) -> bool {
        self.0.contains(EntityType::Cw)
    }
    pub fn is_prod(self) -> bool {
        self.0.contains(EntityType::Prod)
    }

    /// Flags as 0/1 in [`EntityType::ALL`] order.
    pub fn as_array(self) -> [u8; 6] {
        EntityType::ALL.map(|t| u8::from(self.0.contains(t)))
    }

    /// Feature name for a flag, e.g. `is_loc`.
    pub fn flag_name(tag: EntityType) -> &'static str {
        match tag {
            EntityType::Per => "is_per",
            EntityType::Loc => "is_loc",
            EntityType::Grp => "is_grp",
            EntityType::Corp => "is_corp",
            EntityType::Cw => "is_cw",
            EntityType::Prod => "is_prod",
        }
    }
}

/// How tokens are matched against multi-word phrases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchMode {
    /// Each token looked up on its own.
    #[default]
    PerToken,
    /// Greedy left-to-right longest match over space-joined token spans.
    LongestSpan { max_span: usize },
}

pub const DEFAULT_MAX_SPAN: usize = 5;

impl FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_token" | "per-token" => Ok(MatchMode::PerToken),
            "longest_span" | "longest-span" => Ok(MatchMode::LongestSpan {
                max_span: DEFAULT_MAX_SPAN,
            }),
            other => Err(Error::Config(format!("unknown gazetteer match mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Node {
    // Sorted by char.
    children: Vec<(char, u32)>,
    tags: TagSet,
}

impl Node {
    fn child(&self, c: char) -> Option<u32> {
        self.children
            .binary_search_by_key(&c, |&(k, _)| k)
            .ok()
            .map(|i| self.children[i].1)
    }
}

/// Character trie mapping normalized phrases to entity-type sets.
/// Immutable once built; share it freely across threads.
#[derive(Debug, Clone)]
pub struct GazetteerTrie {
    nodes: Vec<Node>,
    counts: [usize; 6],
}

/// Two tries are equal when they hold the same phrases with the same tags,
/// whatever order the phrases were inserted in.
impl PartialEq for GazetteerTrie {
    fn eq(&self, other: &Self) -> bool {
        self.counts == other.counts && self.entries() == other.entries()
    }
}

impl Eq for GazetteerTrie {}

impl Default for GazetteerTrie {
    fn default() -> Self {
        Self::new()
    }
}

/// Trims, collapses internal whitespace, applies NFC and strips punctuation
/// hanging off either end. Returns `None` when nothing is left.
pub fn normalize_phrase(raw: &str) -> Option<String> {
    let composed = nfc(raw);
    let collapsed = composed.split_whitespace().collect::<Vec<_>>().join(" ");
    let stripped = collapsed.trim_matches(|c: char| is_punct(c) || c.is_whitespace());
    (!stripped.is_empty()).then(|| stripped.to_string())
}

impl GazetteerTrie {
    pub fn new() -> Self {
        Self {
            nodes: vec![Node::default()],
            counts: [0; 6],
        }
    }

    /// Inserts an already normalized phrase. Returns whether `(phrase, tag)` was new.
    pub fn insert(&mut self, phrase: &str, tag: EntityType) -> bool {
        let mut at = 0usize;
        for c in phrase.chars() {
            at = match self.nodes[at].child(c) {
                Some(next) => next as usize,
                None => {
                    let next = self.nodes.len();
                    self.nodes.push(Node::default());
                    let children = &mut self.nodes[at].children;
                    let pos = children.partition_point(|&(k, _)| k < c);
                    children.insert(pos, (c, next as u32));
                    next
                }
            };
        }
        let added = self.nodes[at].tags.insert(tag);
        if added {
            self.counts[tag.index()] += 1;
        }
        added
    }

    /// Normalizes `raw` and inserts it. Returns `false` for duplicates and for
    /// phrases that normalize to nothing.
    pub fn insert_raw(&mut self, raw: &str, tag: EntityType) -> bool {
        match normalize_phrase(raw) {
            Some(phrase) => self.insert(&phrase, tag),
            None => false,
        }
    }

    /// Exact-match lookup (after NFC). Empty set for non-members.
    pub fn lookup(&self, token: &str) -> TagSet {
        self.lookup_counted(token).0
    }

    /// Lookup that also reports the number of node steps taken.
    pub fn lookup_counted(&self, token: &str) -> (TagSet, usize) {
        let token = nfc(token);
        let mut at = 0usize;
        let mut steps = 1;
        for c in token.chars() {
            match self.nodes[at].child(c) {
                Some(next) => {
                    at = next as usize;
                    steps += 1;
                }
                None => return (TagSet::EMPTY, steps),
            }
        }
        (self.nodes[at].tags, steps)
    }

    /// Number of distinct phrases carrying `tag`.
    pub fn entry_count(&self, tag: EntityType) -> usize {
        self.counts[tag.index()]
    }

    pub fn entry_counts(&self) -> BTreeMap<EntityType, usize> {
        EntityType::ALL.iter().map(|&t| (t, self.entry_count(t))).collect()
    }

    /// Number of (phrase, tag) pairs.
    pub fn total_entries(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// All `(phrase, tags)` pairs in lexicographic char order.
    pub fn entries(&self) -> Vec<(String, TagSet)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, String::new())];
        while let Some((at, prefix)) = stack.pop() {
            let node = &self.nodes[at];
            if !node.tags.is_empty() {
                out.push((prefix.clone(), node.tags));
            }
            for &(c, child) in node.children.iter().rev() {
                let mut p = prefix.clone();
                p.push(c);
                stack.push((child as usize, p));
            }
        }
        out
    }

    /// Flags for every token of a sentence.
    pub fn sentence_flags<S: AsRef<str>>(&self, tokens: &[S], mode: MatchMode) -> Vec<GazetteerFeatures> {
        match mode {
            MatchMode::PerToken => tokens
                .iter()
                .map(|t| GazetteerFeatures(self.lookup(t.as_ref())))
                .collect(),
            MatchMode::LongestSpan { max_span } => self.longest_spans(tokens, max_span),
        }
    }

    fn longest_spans<S: AsRef<str>>(&self, tokens: &[S], max_span: usize) -> Vec<GazetteerFeatures> {
        let mut flags = vec![GazetteerFeatures::default(); tokens.len()];
        let mut i = 0;
        while i < tokens.len() {
            match self.longest_match_at(tokens, i, max_span) {
                Some((len, tags)) => {
                    for f in &mut flags[i..i + len] {
                        f.0 = tags;
                    }
                    i += len;
                }
                None => i += 1,
            }
        }
        flags
    }

    /// Longest span starting at `start` whose space-joined text is a phrase.
    fn longest_match_at<S: AsRef<str>>(
        &self,
        tokens: &[S],
        start: usize,
        max_span: usize,
    ) -> Option<(usize, TagSet)> {
        let mut at = 0usize;
        let mut best = None;
        let end = tokens.len().min(start + max_span);
        for (offset, token) in tokens[start..end].iter().enumerate() {
            if offset > 0 {
                match self.nodes[at].child(' ') {
                    Some(next) => at = next as usize,
                    None => break,
                }
            }
            let token = nfc(token.as_ref());
            let mut complete = true;
            for c in token.chars() {
                match self.nodes[at].child(c) {
                    Some(next) => at = next as usize,
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if !complete {
                break;
            }
            let tags = self.nodes[at].tags;
            if !tags.is_empty() {
                best = Some((offset + 1, tags));
            }
        }
        best
    }
}

/// Builds a trie from one phrase-per-line file per tag.
pub fn build_gazetteer(lists: &BTreeMap<EntityType, Vec<std::path::PathBuf>>) -> Result<GazetteerTrie> {
    let mut trie = GazetteerTrie::new();
    for (&tag, paths) in lists {
        let before = trie.entry_count(tag);
        for path in paths {
            let text = io::read_to_string(path)?;
            for line in text.lines() {
                trie.insert_raw(line, tag);
            }
        }
        if trie.entry_count(tag) == before {
            log::warn!("gazetteer list for {tag} is empty after cleaning");
        }
    }
    Ok(trie)
}

/// Adds `phrase<TAB>TAG` lines to `trie`.
pub fn extend_from_tsv(trie: &mut GazetteerTrie, text: &str) -> Result<()> {
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (phrase, tag) = line
            .rsplit_once('\t')
            .ok_or_else(|| Error::parse(n + 1, "expected `phrase<TAB>TAG`"))?;
        let tag: EntityType = tag.trim().parse().map_err(|_| Error::parse(n + 1, format!("unknown tag {tag:?}")))?;
        trie.insert_raw(phrase, tag);
    }
    Ok(())
}

const MAGIC: &[u8; 8] = b"GAZTRIE\0";
const VERSION: u32 = 1;

impl GazetteerTrie {
    /// Versioned, length-prefixed preorder dump. Layout (little endian):
    /// magic, version u32, node count u32, then per node in preorder:
    /// tag bits u8, child count u32, and for each child its char as u32
    /// followed by the child's own record.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.nodes.len() * 9);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.nodes.len() as u32).to_le_bytes());
        let mut stack: Vec<(Option<char>, u32)> = vec![(None, 0)];
        while let Some((c, at)) = stack.pop() {
            if let Some(c) = c {
                out.extend_from_slice(&(c as u32).to_le_bytes());
            }
            let node = &self.nodes[at as usize];
            out.push(node.tags.bits());
            out.extend_from_slice(&(node.children.len() as u32).to_le_bytes());
            for &(c, child) in node.children.iter().rev() {
                stack.push((Some(c), child));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("not a gazetteer file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported gazetteer version {version}")));
        }
        let declared = r.u32()? as usize;
        if declared == 0 || declared > bytes.len() {
            return Err(Error::Format(format!("implausible node count {declared}")));
        }
        let mut trie = GazetteerTrie {
            nodes: Vec::with_capacity(declared),
            counts: [0; 6],
        };
        // (node index, children still to read)
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let root = trie.read_node(&mut r)?;
        stack.push(root);
        while let Some(top) = stack.last_mut() {
            if top.1 == 0 {
                stack.pop();
                continue;
            }
            top.1 -= 1;
            let parent = top.0;
            let c = r.u32()?;
            let c = char::from_u32(c).ok_or_else(|| Error::Format(format!("invalid char {c:#x}")))?;
            let child = trie.read_node(&mut r)?;
            let children = &mut trie.nodes[parent].children;
            if children.last().is_some_and(|&(prev, _)| prev >= c) {
                return Err(Error::Format("children out of order".into()));
            }
            children.push((c, child.0 as u32));
            stack.push(child);
            if trie.nodes.len() > declared {
                return Err(Error::Format("more nodes than declared".into()));
            }
        }
        if trie.nodes.len() != declared {
            return Err(Error::Format(format!(
                "declared {declared} nodes, found {}",
                trie.nodes.len()
            )));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after trie".into()));
        }
        Ok(trie)
    }

    fn read_node(&mut self, r: &mut ByteReader<'_>) -> Result<(usize, usize)> {
        let bits = r.take(1)?[0];
        let tags = TagSet::from_bits(bits).ok_or_else(|| Error::Format(format!("bad tag bits {bits:#x}")))?;
        let n_children = r.u32()? as usize;
        if n_children > r.remaining() {
            return Err(Error::Format("child count exceeds file size".into()));
        }
        for t in tags.iter() {
            self.counts[t.index()] += 1;
        }
        let index = self.nodes.len();
        self.nodes.push(Node {
            children: Vec::with_capacity(n_children),
            tags,
        });
        Ok((index, n_children))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        io::write_atomic(path, |out| out.write_all(&bytes).map_err(io::write_err))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format("truncated gazetteer file".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn insert_then_lookup() {
        let mut trie = GazetteerTrie::new();
        assert!(trie.insert("ঢাকা", EntityType::Loc));
        assert_eq!(trie.lookup("ঢাকা"), TagSet::single(EntityType::Loc));
        assert!(trie.lookup("ঢাক").is_empty());
        assert!(trie.lookup("ঢাকায়").is_empty());
        assert!(trie.lookup("").is_empty());
    }

    #[test]
    fn multi_tag_phrase_matches_map_oracle() {
        let mut trie = GazetteerTrie::new();
        let mut oracle: HashMap<&str, TagSet> = HashMap::new();
        for (p, t) in [("ঢাকা", EntityType::Loc), ("ঢাকা", EntityType::Grp), ("আবাহনী", EntityType::Grp)] {
            trie.insert(p, t);
            oracle.entry(p).or_default().insert(t);
        }
        for p in ["ঢাকা", "আবাহনী", "ঢা"] {
            assert_eq!(trie.lookup(p), oracle.get(p).copied().unwrap_or_default(), "{p}");
        }
        assert_eq!(trie.lookup("ঢাকা").len(), 2);
    }

    #[test]
    fn duplicates_count_once() {
        let mut trie = GazetteerTrie::new();
        assert!(trie.insert_raw("রবীন্দ্রনাথ ঠাকুর", EntityType::Per));
        assert!(!trie.insert_raw("  রবীন্দ্রনাথ   ঠাকুর ", EntityType::Per));
        assert_eq!(trie.entry_count(EntityType::Per), 1);
        assert!(!trie.insert_raw("।,!", EntityType::Per));
        assert_eq!(trie.total_entries(), 1);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_phrase("  \"ঢাকা,  বাংলাদেশ।\" ").as_deref(), Some("ঢাকা, বাংলাদেশ"));
        assert_eq!(normalize_phrase("...!"), None);
        assert_eq!(normalize_phrase("   "), None);
    }

    #[test]
    fn span_modes() {
        let mut trie = GazetteerTrie::new();
        trie.insert("A B", EntityType::Corp);
        trie.insert("X", EntityType::Per);
        let spans = trie.sentence_flags(&["A", "B", "X"], MatchMode::LongestSpan { max_span: 5 });
        assert!(spans[0].is_corp() && spans[1].is_corp() && spans[2].is_per());
        assert!(!spans[0].is_per());
        let tokens = trie.sentence_flags(&["A", "B"], MatchMode::PerToken);
        assert_eq!(tokens[0].as_array(), [0; 6]);
        assert_eq!(tokens[1].as_array(), [0; 6]);
        let limited = trie.sentence_flags(&["A", "B"], MatchMode::LongestSpan { max_span: 1 });
        assert_eq!(limited[0].as_array(), [0; 6]);
    }

    #[test]
    fn single_token_flag() {
        let mut trie = GazetteerTrie::new();
        trie.insert("X", EntityType::Per);
        let flags = trie.sentence_flags(&["X"], MatchMode::PerToken);
        assert_eq!(flags[0].as_array(), [1, 0, 0, 0, 0, 0]);
    }

    fn small() -> GazetteerTrie {
        let mut trie = GazetteerTrie::new();
        trie.insert("ঢাকা", EntityType::Loc);
        trie.insert("ঢাকা", EntityType::Grp);
        trie.insert("আবাহনী লিমিটেড", EntityType::Corp);
        trie.insert("ক", EntityType::Per);
        trie
    }

    #[test]
    fn byte_round_trip() {
        let trie = small();
        let bytes = trie.to_bytes();
        let back = GazetteerTrie::from_bytes(&bytes).unwrap();
        assert_eq!(back, trie);
        assert_eq!(back.entries(), trie.entries());
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncated_and_corrupt_files_fail() {
        let bytes = small().to_bytes();
        for cut in [0, 4, 12, 16, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(GazetteerTrie::from_bytes(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut versioned = bytes.clone();
        versioned[8] = 9;
        assert!(matches!(GazetteerTrie::from_bytes(&versioned), Err(Error::Format(_))));
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(GazetteerTrie::from_bytes(&trailing), Err(Error::Format(_))));
    }

    #[test]
    fn lookup_steps_bounded_by_length() {
        let trie = small();
        for probe in ["ঢাকা", "আবাহনী লিমিটেড", "zzz", ""] {
            let (_, steps) = trie.lookup_counted(probe);
            assert!(steps <= probe.chars().count() + 1);
        }
    }
}
