//! Template-driven offline narrator whose output scores at a requested style.
//!
//! Each attempt lays out sentence lengths for the syntactic level, places
//! lexicon-bearing chunks (fillers, spatial phrases, vague and key nouns)
//! into sentences with room for them, pads with neutral words to the exact
//! length, then re-scores the text. The first attempt that scores at the
//! target wins; otherwise the closest one is returned.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::label::Language;
use crate::persona::{Persona, StyleDimension, StyleVector};
use crate::rubric::{analyze, score, tokenize, Lexicons};

const MAX_ATTEMPTS: usize = 32;

struct Bank {
    subjects: &'static [&'static str],
    intransitive: &'static [&'static str],
    transitive: &'static [&'static str],
    objects: &'static [&'static str],
    keys: &'static [&'static str],
    vague: &'static [&'static str],
    spatial: &'static [&'static str],
    fillers: &'static [&'static str],
    subordinators: &'static [&'static str],
    tails: &'static [&'static str],
    pads: &'static [&'static str],
}

const EN: Bank = Bank {
    subjects: &["she", "he", "the lady", "the kid"],
    intransitive: &["waits", "moves", "stands", "wobbles", "leans", "shakes", "turns"],
    transitive: &[
        "holds",
        "grabs",
        "watches",
        "dries",
        "takes",
        "sees",
        "wants",
        "reaches for",
    ],
    objects: &["a towel", "the cup", "a dish", "a cloth"],
    keys: &[
        "the boy",
        "the girl",
        "the mother",
        "a cookie",
        "the jar",
        "the stool",
        "the sink",
        "the water",
        "a plate",
        "the curtain",
        "the window",
    ],
    vague: &[
        "something",
        "someone",
        "somebody",
        "some stuff",
        "that thing",
        "the whatsit",
    ],
    spatial: &[
        "behind her",
        "near the counter",
        "under it",
        "beside the door",
        "above the counter",
        "on the left",
        "next to her",
        "in front of him",
        "across the room",
        "between them",
        "below the shelf",
        "underneath it",
    ],
    fillers: &["um", "uh", "er", "erm", "hmm"],
    subordinators: &["because", "when", "while", "although", "since"],
    tails: &[
        "she is busy",
        "it is late",
        "the house is quiet",
        "she is tired",
        "it gets dark",
        "nobody is looking",
    ],
    pads: &[
        "today",
        "again",
        "quietly",
        "now",
        "too",
        "anyway",
        "at home",
        "for ages",
        "with care",
        "all day",
        "in the kitchen",
        "on the floor",
        "at the moment",
        "on a warm afternoon",
    ],
};

const ZH: Bank = Bank {
    subjects: &["她", "他", "老人家", "小朋友"],
    intransitive: &["站着", "等着", "笑了", "在忙", "转过身"],
    transitive: &["拿着", "擦", "看着", "够"],
    objects: &["毛巾", "杯子", "一块布", "碗"],
    keys: &[
        "男孩", "女孩", "妈妈", "饼干", "罐子", "凳子", "水槽", "水", "盘子", "窗帘", "窗户",
    ],
    vague: &["东西", "有人", "某人", "那啥", "那个东西"],
    spatial: &[
        "在后面",
        "在旁边",
        "在左边",
        "在右边",
        "在上面",
        "在下面",
        "在前面",
        "在对面",
        "在附近",
        "在中间",
    ],
    fillers: &["嗯", "呃", "额", "唔", "哎"],
    subordinators: &["因为", "如果", "虽然", "要是"],
    tails: &["天气很热", "她很累", "厨房很热", "家里很安静"],
    pads: &[
        "今天",
        "也",
        "又",
        "一直",
        "很认真地",
        "小心地",
        "在厨房里",
        "不停地",
        "刚才",
        "安静地",
    ],
};

#[derive(Clone, Copy, PartialEq)]
enum Item {
    Filler(&'static str),
    Spatial(&'static str),
    Noun(&'static str),
}

#[derive(Clone, Default)]
struct Slot {
    hi: usize,
    lo: usize,
    sub: bool,
    filler: Option<&'static str>,
    spatial: Option<&'static str>,
    subject: Option<&'static str>,
    object: Option<&'static str>,
}

struct Layout<'a> {
    bank: &'static Bank,
    len: HashMap<&'static str, usize>,
    lex: &'a Lexicons,
}

impl<'a> Layout<'a> {
    fn new(lex: &'a Lexicons) -> Self {
        let bank = match lex.language {
            Language::En => &EN,
            Language::Zh => &ZH,
        };
        let mut len = HashMap::new();
        let lists = [
            bank.subjects,
            bank.intransitive,
            bank.transitive,
            bank.objects,
            bank.keys,
            bank.vague,
            bank.spatial,
            bank.fillers,
            bank.subordinators,
            bank.tails,
            bank.pads,
        ];
        for s in lists.into_iter().flatten() {
            len.insert(*s, tokenize(s, lex).tokens.len());
        }
        Self { bank, len, lex }
    }

    fn l(&self, s: &str) -> usize {
        self.len[s]
    }

    fn min_of(&self, list: &[&'static str]) -> usize {
        list.iter().map(|s| self.l(s)).min().unwrap_or(0)
    }

    fn min_sub(&self) -> usize {
        self.min_of(self.bank.subordinators) + self.min_of(self.bank.tails)
    }

    fn min_len(&self, s: &Slot) -> usize {
        let b = self.bank;
        let subject = s.subject.map_or(self.min_of(b.subjects), |x| self.l(x));
        let predicate = match s.object {
            Some(o) => self.min_of(b.transitive) + self.l(o),
            None => self
                .min_of(b.intransitive)
                .min(self.min_of(b.transitive) + self.min_of(b.objects)),
        };
        subject
            + predicate
            + s.filler.map_or(0, |x| self.l(x))
            + s.spatial.map_or(0, |x| self.l(x))
            + if s.sub { self.min_sub() } else { 0 }
    }

    /// Tries to put `item` into `slot`, keeping the sentence within its cap.
    fn place<R: Rng + ?Sized>(&self, slot: &mut Slot, item: Item, rng: &mut R) -> bool {
        let mut trial = slot.clone();
        match item {
            Item::Filler(f) if trial.filler.is_none() => trial.filler = Some(f),
            Item::Spatial(p) if trial.spatial.is_none() => trial.spatial = Some(p),
            Item::Noun(n) => match (trial.subject, trial.object) {
                (None, None) if rng.random_bool(0.5) => trial.subject = Some(n),
                (None, None) | (Some(_), None) => trial.object = Some(n),
                (None, Some(_)) => trial.subject = Some(n),
                _ => return false,
            },
            _ => return false,
        }
        if self.min_len(&trial) > trial.hi {
            return false;
        }
        *slot = trial;
        true
    }

    fn pick<R: Rng + ?Sized>(
        &self,
        options: Vec<(Vec<&'static str>, usize)>,
        base: usize,
        slack: &mut usize,
        rng: &mut R,
    ) -> Vec<&'static str> {
        let fitting: Vec<_> = options.into_iter().filter(|(_, l)| *l - base <= *slack).collect();
        let (pieces, l) = fitting.choose(rng).expect("the minimal option always fits").clone();
        *slack -= l - base;
        pieces
    }

    /// Distinct pads whose lengths sum to `need`.
    fn pads<R: Rng + ?Sized>(&self, need: usize, rng: &mut R) -> Option<Vec<&'static str>> {
        fn search(pads: &[(&'static str, usize)], need: usize, out: &mut Vec<&'static str>) -> bool {
            if need == 0 {
                return true;
            }
            for (i, (p, l)) in pads.iter().enumerate() {
                if *l <= need {
                    out.push(p);
                    if search(&pads[i + 1..], need - l, out) {
                        return true;
                    }
                    out.pop();
                }
            }
            false
        }
        let mut pads: Vec<_> = self.bank.pads.iter().map(|p| (*p, self.l(p))).collect();
        pads.shuffle(rng);
        let mut out = Vec::new();
        search(&pads, need, &mut out).then_some(out)
    }

    fn realize<R: Rng + ?Sized>(&self, s: &Slot, target: usize, rng: &mut R) -> Option<String> {
        let b = self.bank;
        let mut slack = target - self.min_len(s);
        let subject = match s.subject {
            Some(x) => x,
            None => {
                let opts = b.subjects.iter().map(|x| (vec![*x], self.l(x))).collect();
                self.pick(opts, self.min_of(b.subjects), &mut slack, rng)[0]
            }
        };
        let predicate = match s.object {
            Some(o) => {
                let opts = b.transitive.iter().map(|v| (vec![*v], self.l(v))).collect();
                let mut p = self.pick(opts, self.min_of(b.transitive), &mut slack, rng);
                p.push(o);
                p
            }
            None => {
                let mut opts: Vec<_> = b.intransitive.iter().map(|v| (vec![*v], self.l(v))).collect();
                for v in b.transitive {
                    for o in b.objects {
                        opts.push((vec![*v, *o], self.l(v) + self.l(o)));
                    }
                }
                let base = opts.iter().map(|(_, l)| *l).min().unwrap_or(0);
                self.pick(opts, base, &mut slack, rng)
            }
        };
        let clause = if s.sub {
            let mut opts = Vec::new();
            for c in b.subordinators {
                for t in b.tails {
                    opts.push((vec![*c, *t], self.l(c) + self.l(t)));
                }
            }
            self.pick(opts, self.min_sub(), &mut slack, rng)
        } else {
            Vec::new()
        };
        let pads = self.pads(slack, rng)?;
        Some(match self.lex.language {
            Language::En => {
                let mut parts: Vec<String> = Vec::new();
                if let Some(f) = s.filler {
                    parts.push(format!("{f},"));
                }
                parts.push(subject.to_string());
                parts.extend(predicate.iter().map(|p| p.to_string()));
                parts.extend(s.spatial.map(str::to_string));
                parts.extend(pads.iter().map(|p| p.to_string()));
                if !clause.is_empty() {
                    if let Some(last) = parts.last_mut() {
                        last.push(',');
                    }
                    parts.push(clause.join(" "));
                }
                let mut text = parts.join(" ");
                if let Some(first) = text.get(..1) {
                    text = first.to_uppercase() + &text[1..];
                }
                text + "."
            }
            Language::Zh => {
                let mut text = String::new();
                if let Some(f) = s.filler {
                    text.push_str(f);
                    text.push('，');
                }
                if !clause.is_empty() {
                    text.push_str(&clause.concat());
                    text.push('，');
                }
                text.push_str(subject);
                text.push_str(&pads.concat());
                text.push_str(s.spatial.unwrap_or(""));
                text.push_str(&predicate.concat());
                text.push('。');
                text
            }
        })
    }

    fn attempt<R: Rng + ?Sized>(&self, style: &StyleVector, rng: &mut R) -> Option<String> {
        let b = self.bank;
        let preferred_words = [80usize, 118, 160][style.get(StyleDimension::NarrativeLength) as usize - 1];
        let word_band =
            [(60usize, 100usize), (101, 135), (136, 190)][style.get(StyleDimension::NarrativeLength) as usize - 1];

        let mut slots: Vec<Slot> = match style.get(StyleDimension::SyntacticComplexity) {
            1 => {
                let m = (preferred_words as f64 / 6.0).round() as usize;
                (0..m)
                    .map(|_| Slot {
                        lo: 5,
                        hi: 7,
                        ..Default::default()
                    })
                    .collect()
            }
            2 => {
                let m = (preferred_words as f64 / 11.0).round() as usize;
                (0..m)
                    .map(|_| Slot {
                        lo: 10,
                        hi: 12,
                        ..Default::default()
                    })
                    .collect()
            }
            _ => {
                let pairs = (preferred_words as f64 / 18.5).round() as usize;
                (0..pairs)
                    .flat_map(|_| {
                        [
                            Slot {
                                lo: 13,
                                hi: 15,
                                sub: true,
                                ..Default::default()
                            },
                            Slot {
                                lo: 4,
                                hi: 5,
                                ..Default::default()
                            },
                        ]
                    })
                    .collect()
            }
        };

        let mut items = Vec::new();
        let spatial = [1, 2, 4][style.get(StyleDimension::SpatialReference) as usize - 1];
        items.extend(b.spatial.choose_multiple(rng, spatial).map(|p| Item::Spatial(p)));
        let (vague, keys) = [(5, 1), (2, 2), (0, 5)][style.get(StyleDimension::Clarity) as usize - 1];
        items.extend(b.keys.choose_multiple(rng, keys).map(|k| Item::Noun(k)));
        items.extend((0..vague).map(|_| Item::Noun(b.vague.choose(rng).expect("nonempty"))));
        let fillers = [5, 2, 1][style.get(StyleDimension::Fluency) as usize - 1];
        items.extend((0..fillers).map(|_| Item::Filler(b.fillers.choose(rng).expect("nonempty"))));

        let mut order: Vec<usize> = (0..slots.len()).collect();
        for item in items {
            order.shuffle(rng);
            let placed = order.iter().any(|&i| self.place(&mut slots[i], item, rng));
            if !placed {
                return None;
            }
        }

        let mut lengths: Vec<usize> = slots.iter().map(|s| s.lo.max(self.min_len(s))).collect();
        let floor: usize = lengths.iter().sum();
        let ceiling: usize = slots.iter().map(|s| s.hi).sum();
        let words = preferred_words.clamp(floor.max(word_band.0), ceiling.min(word_band.1));
        if words < floor || words > ceiling || words < word_band.0 || words > word_band.1 {
            return None;
        }
        let mut extra = words - floor;
        while extra > 0 {
            let open: Vec<usize> = (0..slots.len()).filter(|&i| lengths[i] < slots[i].hi).collect();
            let &i = open.choose(rng)?;
            lengths[i] += 1;
            extra -= 1;
        }

        let sentences: Option<Vec<String>> = slots
            .iter()
            .zip(&lengths)
            .map(|(s, &n)| self.realize(s, n, rng))
            .collect();
        let sep = if self.lex.language == Language::En { " " } else { "" };
        Some(sentences?.join(sep))
    }
}

/// A picture description whose rubric scores equal `persona.style`.
pub fn stub_generate<R: Rng + ?Sized>(persona: &Persona, lexicons: &Lexicons, rng: &mut R) -> String {
    generate_for_style(&persona.style, lexicons, rng)
}

/// Narrative scoring at `style` whenever the banks allow it; the closest
/// attempt otherwise.
pub fn generate_for_style<R: Rng + ?Sized>(style: &StyleVector, lexicons: &Lexicons, rng: &mut R) -> String {
    let layout = Layout::new(lexicons);
    let mut best: Option<(usize, String)> = None;
    for _ in 0..MAX_ATTEMPTS {
        let Some(text) = layout.attempt(style, rng) else {
            continue;
        };
        let scored = score(&analyze(&text, lexicons));
        let matched = StyleDimension::ALL
            .iter()
            .filter(|&&d| scored.get(d) == style.get(d))
            .count();
        if matched == StyleDimension::ALL.len() {
            return text;
        }
        if best.as_ref().is_none_or(|(m, _)| matched > *m) {
            best = Some((matched, text));
        }
    }
    best.map(|(_, t)| t).unwrap_or_default()
}
