package com.example.shop;

import java.util.ArrayList;
import java.util.List;
import org.junit.Test;
import static org.junit.Assert.assertEquals;
import static org.junit.Assert.assertTrue;

public class PalindromeLoopTest {

    private final Checker helper = new Checker();

    @Test
    public void checksWords() {
        List<String> words = new ArrayList<>();
        words.add("level");
        words.add("noon");
        for (String w : words) {
            boolean p = TextUtils.isPalindrome(w);
            if (w.length() > 3) {
                assertTrue(p);
            }
            helper.assertValid(w);
        }
        assertEquals(2, words.size());
    }

    static class Checker {
        void assertValid(String w) {
        }
    }
}
