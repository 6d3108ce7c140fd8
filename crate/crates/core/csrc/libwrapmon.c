/* Measurement runtime for libwrap wrappers.
 *
 * Wrappers register one region per function and report enter/exit events.
 * Each thread aggregates its events into its own call tree keyed by call
 * path; the trees are merged and written as JSON when the process exits
 * or libwrap_flush() is called.
 *
 * Environment:
 *   LIBWRAP_PROFILE_OUT  output path, "%p" is replaced by the process id
 *                        (default: libwrap_profile.<pid>.json)
 *   LIBWRAP_VERBOSE      print a line when the runtime starts and writes
 */

#define _POSIX_C_SOURCE 200809L

#include <inttypes.h>
#include <pthread.h>
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <time.h>
#include <unistd.h>

#define EXPORT __attribute__((visibility("default")))

struct region {
    char *name;
    char *file;
    int line;
};

struct node {
    unsigned region;
    uint64_t count;
    uint64_t incl_ns;
    struct node *parent;
    struct node *first_child;
    struct node *next_sibling;
};

struct frame {
    struct node *node;
    uint64_t start_ns;
};

struct thread_state {
    struct node root;
    struct frame *stack;
    size_t depth;
    size_t capacity;
    struct thread_state *next;
};

static pthread_mutex_t lock = PTHREAD_MUTEX_INITIALIZER;
static struct region *regions;
static size_t region_count, region_capacity;
/* Open addressing over region ids + 1; 0 marks an empty slot. */
static unsigned *region_index;
static size_t index_capacity;
static struct thread_state *threads;
static __thread struct thread_state *self;
static int verbose;

static void die(const char *what)
{
    fprintf(stderr, "libwrap: %s\n", what);
    abort();
}

static void *xcalloc(size_t n, size_t size)
{
    void *p = calloc(n, size);
    if (!p)
        die("out of memory");
    return p;
}

static char *xstrdup(const char *s)
{
    char *p = strdup(s ? s : "");
    if (!p)
        die("out of memory");
    return p;
}

static uint64_t now_ns(void)
{
    struct timespec ts;
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return (uint64_t)ts.tv_sec * 1000000000u + (uint64_t)ts.tv_nsec;
}

static uint64_t hash_triple(const char *name, const char *file, int line)
{
    uint64_t h = 1469598103934665603u;
    for (const char *s = name; *s; ++s)
        h = (h ^ (unsigned char)*s) * 1099511628211u;
    h = (h ^ 0xff) * 1099511628211u;
    for (const char *s = file; *s; ++s)
        h = (h ^ (unsigned char)*s) * 1099511628211u;
    return (h ^ (uint64_t)(unsigned)line) * 1099511628211u;
}

static void index_insert(unsigned id)
{
    struct region *r = &regions[id];
    size_t mask = index_capacity - 1;
    size_t i = hash_triple(r->name, r->file, r->line) & mask;
    while (region_index[i])
        i = (i + 1) & mask;
    region_index[i] = id + 1;
}

static void grow_index(void)
{
    free(region_index);
    index_capacity = index_capacity ? index_capacity * 2 : 256;
    region_index = xcalloc(index_capacity, sizeof *region_index);
    for (unsigned id = 0; id < region_count; ++id)
        index_insert(id);
}

EXPORT unsigned libwrap_region_register(const char *name, const char *file, int line)
{
    if (!name)
        name = "";
    if (!file)
        file = "";
    pthread_mutex_lock(&lock);
    if (index_capacity) {
        size_t mask = index_capacity - 1;
        for (size_t i = hash_triple(name, file, line) & mask; region_index[i]; i = (i + 1) & mask) {
            struct region *r = &regions[region_index[i] - 1];
            if (r->line == line && strcmp(r->name, name) == 0 && strcmp(r->file, file) == 0) {
                unsigned id = region_index[i] - 1;
                pthread_mutex_unlock(&lock);
                return id;
            }
        }
    }
    if (region_count == region_capacity) {
        region_capacity = region_capacity ? region_capacity * 2 : 64;
        regions = realloc(regions, region_capacity * sizeof *regions);
        if (!regions)
            die("out of memory");
    }
    unsigned id = (unsigned)region_count++;
    regions[id].name = xstrdup(name);
    regions[id].file = xstrdup(file);
    regions[id].line = line;
    if (2 * region_count > index_capacity)
        grow_index();
    else
        index_insert(id);
    pthread_mutex_unlock(&lock);
    return id;
}

static struct thread_state *thread_state(void)
{
    if (!self) {
        struct thread_state *t = xcalloc(1, sizeof *t);
        t->capacity = 64;
        t->stack = xcalloc(t->capacity, sizeof *t->stack);
        t->stack[0].node = &t->root;
        pthread_mutex_lock(&lock);
        t->next = threads;
        threads = t;
        pthread_mutex_unlock(&lock);
        self = t;
    }
    return self;
}

static struct node *child(struct node *parent, unsigned region)
{
    struct node **link = &parent->first_child;
    for (struct node *c = *link; c; link = &c->next_sibling, c = *link) {
        if (c->region == region) {
            /* Move to front: repeated calls find their node at once. */
            *link = c->next_sibling;
            c->next_sibling = parent->first_child;
            parent->first_child = c;
            return c;
        }
    }
    struct node *c = xcalloc(1, sizeof *c);
    c->region = region;
    c->parent = parent;
    c->next_sibling = parent->first_child;
    parent->first_child = c;
    return c;
}

EXPORT void libwrap_enter(unsigned region)
{
    struct thread_state *t = thread_state();
    if (t->depth + 1 == t->capacity) {
        t->capacity *= 2;
        t->stack = realloc(t->stack, t->capacity * sizeof *t->stack);
        if (!t->stack)
            die("out of memory");
    }
    struct node *n = child(t->stack[t->depth].node, region);
    n->count++;
    t->depth++;
    t->stack[t->depth].node = n;
    t->stack[t->depth].start_ns = now_ns();
}

static const char *region_name(unsigned id)
{
    return id < region_count ? regions[id].name : "<unregistered>";
}

EXPORT void libwrap_exit(unsigned region)
{
    uint64_t end = now_ns();
    struct thread_state *t = thread_state();
    if (t->depth == 0) {
        pthread_mutex_lock(&lock);
        fprintf(stderr, "libwrap: exit from `%s` without a matching enter\n", region_name(region));
        abort();
    }
    struct frame *f = &t->stack[t->depth];
    if (f->node->region != region) {
        pthread_mutex_lock(&lock);
        fprintf(stderr, "libwrap: mismatched exit: expected `%s`, got `%s`\n",
                region_name(f->node->region), region_name(region));
        abort();
    }
    f->node->incl_ns += end - f->start_ns;
    t->depth--;
}

/* Merged profile tree. */
struct mnode {
    unsigned region;
    uint64_t count;
    uint64_t incl_ns;
    struct mnode *first_child;
    struct mnode *next_sibling;
};

static void merge_into(struct mnode *into, const struct node *from)
{
    for (const struct node *c = from->first_child; c; c = c->next_sibling) {
        /* Children are kept sorted by region id. */
        struct mnode **link = &into->first_child;
        while (*link && (*link)->region < c->region)
            link = &(*link)->next_sibling;
        struct mnode *m = *link;
        if (!m || m->region != c->region) {
            m = xcalloc(1, sizeof *m);
            m->region = c->region;
            m->next_sibling = *link;
            *link = m;
        }
        m->count += c->count;
        m->incl_ns += c->incl_ns;
        merge_into(m, c);
    }
}

static void free_merged(struct mnode *m)
{
    struct mnode *c = m->first_child;
    while (c) {
        struct mnode *next = c->next_sibling;
        free_merged(c);
        free(c);
        c = next;
    }
}

static void write_json_string(FILE *out, const char *s)
{
    fputc('"', out);
    for (; *s; ++s) {
        unsigned char c = (unsigned char)*s;
        if (c == '"' || c == '\\')
            fprintf(out, "\\%c", c);
        else if (c < 0x20)
            fprintf(out, "\\u%04x", c);
        else
            fputc(c, out);
    }
    fputc('"', out);
}

static void write_nodes(FILE *out, const struct mnode *first, int indent)
{
    fputc('[', out);
    for (const struct mnode *m = first; m; m = m->next_sibling) {
        uint64_t children_ns = 0;
        for (const struct mnode *c = m->first_child; c; c = c->next_sibling)
            children_ns += c->incl_ns;
        uint64_t excl = m->incl_ns > children_ns ? m->incl_ns - children_ns : 0;
        fprintf(out, "%s\n%*s{\"region\": %u, \"count\": %" PRIu64 ", \"incl_ns\": %" PRIu64
                     ", \"excl_ns\": %" PRIu64 ", \"children\": ",
                m == first ? "" : ",", indent + 2, "", m->region, m->count, m->incl_ns, excl);
        write_nodes(out, m->first_child, indent + 2);
        fputc('}', out);
    }
    if (first)
        fprintf(out, "\n%*s", indent, "");
    fputc(']', out);
}

static void output_path(char *buf, size_t size)
{
    const char *tmpl = getenv("LIBWRAP_PROFILE_OUT");
    if (!tmpl || !*tmpl) {
        snprintf(buf, size, "libwrap_profile.%ld.json", (long)getpid());
        return;
    }
    size_t n = 0;
    for (const char *s = tmpl; *s && n + 1 < size; ++s) {
        if (s[0] == '%' && s[1] == 'p') {
            n += (size_t)snprintf(buf + n, size - n, "%ld", (long)getpid());
            if (n >= size)
                n = size - 1;
            ++s;
        } else {
            buf[n++] = *s;
        }
    }
    buf[n] = '\0';
}

static void flush(int closing)
{
    char path[4096];
    output_path(path, sizeof path);

    pthread_mutex_lock(&lock);
    if (closing && self) {
        /* Calls still open at exit (e.g. into a function that exits the
           process) end now. */
        uint64_t end = now_ns();
        for (size_t d = self->depth; d > 0; --d)
            self->stack[d].node->incl_ns += end - self->stack[d].start_ns;
        self->depth = 0;
    }
    struct mnode merged = {0};
    for (struct thread_state *t = threads; t; t = t->next)
        merge_into(&merged, &t->root);

    FILE *out = fopen(path, "w");
    if (!out) {
        fprintf(stderr, "libwrap: cannot write profile to %s\n", path);
    } else {
        fprintf(out, "{\n  \"pid\": %ld,\n  \"regions\": [", (long)getpid());
        for (size_t i = 0; i < region_count; ++i) {
            fprintf(out, "%s\n    {\"id\": %zu, \"name\": ", i ? "," : "", i);
            write_json_string(out, regions[i].name);
            fputs(", \"file\": ", out);
            write_json_string(out, regions[i].file);
            fprintf(out, ", \"line\": %d}", regions[i].line);
        }
        fputs(region_count ? "\n  ],\n  \"calltree\": " : "],\n  \"calltree\": ", out);
        write_nodes(out, merged.first_child, 2);
        fputs("\n}\n", out);
        if (fclose(out) != 0)
            fprintf(stderr, "libwrap: cannot write profile to %s\n", path);
        else if (verbose)
            fprintf(stderr, "libwrap: profile written to %s\n", path);
    }
    free_merged(&merged);
    pthread_mutex_unlock(&lock);
}

EXPORT void libwrap_flush(void)
{
    flush(0);
}

__attribute__((constructor)) static void libwrap_start(void)
{
    const char *v = getenv("LIBWRAP_VERBOSE");
    verbose = v && *v && strcmp(v, "0") != 0;
    if (verbose)
        fprintf(stderr, "libwrap: measurement runtime loaded in process %ld\n", (long)getpid());
}

__attribute__((destructor)) static void libwrap_stop(void)
{
    flush(1);
}
