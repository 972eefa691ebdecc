import sys

f = {}
with open(sys.argv[1], encoding='utf-8') as src:
    exec(compile(src.read(), 'candidate', 'exec'), f)

assert [f['fib'](i) for i in range(7)] == [0, 1, 1, 2, 3, 5, 8]
