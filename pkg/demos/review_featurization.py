"""
From review text to bag-of-words features
=========================================

Each entity (a restaurant, a patient record...) has several reviews.  Every
review is tokenized, stopwords are dropped, words are Porter-stemmed and a
negation marks the following words up to the next punctuation.  The
vocabulary is the intersection of the domains' most common stems, and an
entity's vector is the fraction of its reviews containing each stem.
"""

from danlpe.data import label_by_rating
from danlpe.text import bow_pipeline, review_tokens

print(review_tokens("The coffee was not good, but the staff were lovely!"))

cafes = [
    ["Great coffee and friendly staff.", "Coffee was great, cakes too."],
    ["Not friendly at all. Cold coffee.", "Waited forever, bad service."],
]
bars = [
    ["Great beer, friendly crowd.", "Loved the music and the beer."],
    ["Bad service and not clean.", "The beer was warm, bad night."],
]
ratings = {"cafes": [4.6, 1.8], "bars": [4.2, 2.5]}

features = bow_pipeline({"cafes": cafes, "bars": bars}, vocab_size=20, per_domain_common=20)
print("shared vocabulary:", features.vocabulary)
for domain, x in features.features.items():
    labels = [label_by_rating(r) for r in ratings[domain]]
    print(domain, "labels", labels)
    print(x.round(2))
