import sys

f = {}
with open(sys.argv[1], encoding='utf-8') as src:
    exec(compile(src.read(), 'candidate', 'exec'), f)

fb = f['fizzbuzz']
assert [fb(i) for i in (3, 5, 15, 7)] == ['Fizz', 'Buzz', 'FizzBuzz', '7']
