//! Built-in word lists.
//!
//! `STOPWORDS` is the English stopword list commonly shipped with NLTK, with
//! contraction fragments reduced to the forms left after punctuation removal.
//! `COMMON_WORDS` is ranked by general English frequency, most frequent first.

pub const STOPWORDS: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
    "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
    "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
    "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
    "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
    "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by", "for",
    "with", "about", "against", "between", "into", "through", "during", "before", "after",
    "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over", "under",
    "again", "further", "then", "once", "here", "there", "when", "where", "why", "how", "all",
    "any", "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor", "not",
    "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will", "just", "don",
    "should", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "couldn", "didn",
    "doesn", "hadn", "hasn", "haven", "isn", "ma", "mightn", "mustn", "needn", "shan",
    "shouldn", "wasn", "weren", "won", "wouldn",
];

pub const COMMON_WORDS: &[&str] = &[
    "the", "to", "and", "of", "a", "in", "i", "is", "that", "it", "for", "you", "was", "with",
    "on", "as", "have", "but", "be", "they", "at", "not", "this", "he", "are", "my", "so", "we",
    "his", "or", "all", "from", "by", "me", "just", "her", "an", "one", "if", "do", "what",
    "like", "she", "there", "about", "out", "can", "up", "no", "your", "more", "had", "were",
    "time", "get", "when", "been", "would", "will", "people", "them", "our", "who", "how",
    "which", "their", "has", "now", "some", "him", "know", "go", "said", "than", "then", "only",
    "also", "new", "into", "its", "good", "other", "could", "these", "see", "first", "very",
    "back", "because", "make", "think", "over", "way", "even", "well", "year", "two", "us",
    "right", "day", "much", "any", "after", "most", "want", "work", "made", "really", "where",
    "love", "many", "those", "say", "here", "going", "need", "life", "through", "still",
    "world", "being", "should", "last", "years", "down", "did", "off", "great", "never", "got",
    "before", "same", "take", "why", "three", "thing", "best", "little", "man", "own", "come",
    "while", "might", "every", "around", "home", "may", "old", "next", "lot", "game", "long",
    "week", "part", "again", "days", "better", "things", "look", "team", "use", "let", "big",
    "always", "another", "since", "each", "something", "both", "sure", "place", "state",
    "must", "found", "end", "high", "few", "without", "done", "between", "feel",
    "four", "school", "though", "give", "keep", "city", "family", "away", "left",
    "start", "house", "under", "night", "five", "free", "looking", "second", "find", "name",
    "show", "until", "real", "called", "yes", "today", "put", "hard", "won", "once",
    "enough", "tell", "money", "ever", "getting", "run", "play", "together", "true",
    "black", "help", "already", "point", "against", "full", "white", "mean", "makes",
    "public", "top", "least", "open", "national", "says", "small", "number", "month",
    "during", "power", "music", "less", "took", "side", "set", "young", "women", "far",
];
